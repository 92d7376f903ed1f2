//! Computation rates of successive compute-and-forward at the primary receiver.
//!
//! Decoding the `l`-th integer sum `sum_k a_k(l) t_k` sees an effective noise
//! `N0(l)` that depends on scaling factors `alpha_1..alpha_l`. Minimising it
//! is a least-squares problem: after a Gram-Schmidt pass over
//! `{a~_1, .., a~_{l-1}, h}` the optimum is `N0 = P a(l)^T B_l a(l)` where
//!
//! ```text
//! B_l = C (I - sum_j u_j u_j^T / |u_j|^2 - P u_l u_l^T / (1 + P |u_l|^2)) C^T
//! ```
//!
//! and `a~ = C^T a`. The direct evaluator [`noise_variance_direct`] keeps the
//! un-optimised expression around so the closed form can be checked against it.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::channel_model::{effective_channel, ChannelConfig, EffectiveChannel, RatePoint, SchemeParams};
use crate::coeff_search::{is_valid, CoeffMatrix};

/// Rates in `(0, DEGENERATE_RATE]` are decodable but flagged.
pub const DEGENERATE_RATE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("coefficient matrix is not in A(L): the primary codeword cannot be solved from its sums")]
    InvalidMatrix,
    #[error("empty coefficient chain")]
    EmptyChain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Reported rate when the effective noise vanishes.
    pub rate_cap: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { rate_cap: 50.0 }
    }
}

/// `1/2 log2^+(x)`.
pub fn half_log2_plus(x: f64) -> f64 {
    if x > 1.0 {
        0.5 * x.log2()
    } else {
        0.0
    }
}

/// `1/2 log2(1 + x)`.
pub fn capacity(snr: f64) -> f64 {
    0.5 * (1.0 + snr).log2()
}

/// Ordered integer rows `a(1), .., a(l)`, each of length `K + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoeffChain {
    pub rows: Vec<Vec<i64>>,
}

impl CoeffChain {
    pub fn new(rows: Vec<Vec<i64>>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prefix(&self, len: usize) -> CoeffChain {
        CoeffChain::new(self.rows[..len].to_vec())
    }

    fn check(&self, users: usize) -> Result<(), CfError> {
        if self.rows.is_empty() {
            return Err(CfError::EmptyChain);
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != users + 1) {
            return Err(CfError::Dimension(format!(
                "row of length {} for K = {users}",
                r.len()
            )));
        }
        Ok(())
    }
}

/// Literal evaluation of the effective noise variance `N0(l)` for given
/// scaling factors; no optimisation takes place.
pub fn noise_variance_direct(
    config: &ChannelConfig,
    params: &SchemeParams,
    chain: &CoeffChain,
    alphas: &[f64],
) -> Result<f64, CfError> {
    chain.check(config.users)?;
    let l = chain.len();
    if alphas.len() != l {
        return Err(CfError::Dimension(format!(
            "{} scaling factors for {l} sums",
            alphas.len()
        )));
    }
    let p = config.power;
    let b0 = effective_channel(config, params).b0;
    let last = &chain.rows[l - 1];
    let alpha_l = alphas[l - 1];
    let side = |k: usize| -> f64 {
        chain.rows[..l - 1]
            .iter()
            .zip(alphas)
            .map(|(row, a)| a * row[k] as f64)
            .sum()
    };

    let mut n0 = alpha_l * alpha_l;
    let mut g = 0.0;
    for k in 1..=config.users {
        let beta = params.beta[k];
        let lbar = 1.0 - params.lambda[k - 1];
        let t = alpha_l * config.cross[k - 1] - last[k] as f64 * beta - side(k) * beta;
        n0 += t * t * lbar * p;
        g += (side(k) + last[k] as f64) * params.gamma[k - 1];
    }
    let beta0 = params.beta[0];
    let t0 = alpha_l * b0 - last[0] as f64 * beta0 - side(0) * beta0 - g;
    n0 += t0 * t0 * p;
    Ok(n0)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// The lower-triangular matrix `C` with diagonal `[beta_0, beta_k sqrt(1 - lambda_k)]`
/// and first column `[beta_0, gamma_1, .., gamma_K]`.
pub fn scaling_matrix(params: &SchemeParams) -> DMatrix<f64> {
    let n = params.beta.len();
    let mut c = DMatrix::zeros(n, n);
    c[(0, 0)] = params.beta[0];
    for k in 1..n {
        c[(k, 0)] = params.gamma[k - 1];
        c[(k, k)] = params.beta[k] * (1.0 - params.lambda[k - 1]).sqrt();
    }
    c
}

/// `a~ = C^T a`.
pub fn scaled_row(params: &SchemeParams, row: &[i64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    let first = params.beta[0] * row[0] as f64
        + params
            .gamma
            .iter()
            .zip(&row[1..])
            .map(|(g, &a)| g * a as f64)
            .sum::<f64>();
    out.push(first);
    for k in 1..row.len() {
        out.push(row[k] as f64 * params.beta[k] * (1.0 - params.lambda[k - 1]).sqrt());
    }
    out
}

/// Gram-Schmidt state over the scaled rows already decoded.
///
/// Near-zero vectors (`|u|^2 < 1e-12 max(1, |a~|^2)`) are kept for indexing but
/// excluded from every projection.
#[derive(Debug, Clone)]
pub(crate) struct SideInfo {
    h_eff: Vec<f64>,
    u: Vec<Vec<f64>>,
    norm_sq: Vec<f64>,
    active: Vec<bool>,
    /// `mu[j][i] = a~_j^T u_i / |u_i|^2` for `i < j`.
    mu: Vec<Vec<f64>>,
}

impl SideInfo {
    pub(crate) fn new(h_eff: Vec<f64>) -> Self {
        Self {
            h_eff,
            u: Vec::new(),
            norm_sq: Vec::new(),
            active: Vec::new(),
            mu: Vec::new(),
        }
    }

    /// Projects `v` off every active basis vector, returning the coefficients.
    fn reduce(&self, v: &mut [f64]) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.u.len()];
        for i in 0..self.u.len() {
            if !self.active[i] {
                continue;
            }
            let c = dot(v, &self.u[i]) / self.norm_sq[i];
            coeffs[i] = c;
            for (x, ui) in v.iter_mut().zip(&self.u[i]) {
                *x -= c * ui;
            }
        }
        coeffs
    }

    pub(crate) fn push(&mut self, a_tilde: &[f64]) {
        let mut v = a_tilde.to_vec();
        let mu = self.reduce(&mut v);
        let n = dot(&v, &v);
        let scale = dot(a_tilde, a_tilde).max(1.0);
        self.active.push(n >= 1e-12 * scale);
        self.norm_sq.push(n);
        self.u.push(v);
        self.mu.push(mu);
    }

    /// `u_l = h - sum_i h|u_i`.
    pub(crate) fn residual_channel(&self) -> Vec<f64> {
        let mut v = self.h_eff.clone();
        self.reduce(&mut v);
        v
    }

    /// `I - sum_j u_j u_j^T / |u_j|^2 - P u_l u_l^T / (1 + P |u_l|^2)`.
    pub(crate) fn middle_matrix(&self, power: f64) -> DMatrix<f64> {
        let n = self.h_eff.len();
        let mut m = DMatrix::identity(n, n);
        for (i, u) in self.u.iter().enumerate() {
            if !self.active[i] {
                continue;
            }
            let s = 1.0 / self.norm_sq[i];
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] -= s * u[r] * u[c];
                }
            }
        }
        let ul = self.residual_channel();
        let s = power / (1.0 + power * dot(&ul, &ul));
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] -= s * ul[r] * ul[c];
            }
        }
        m
    }

    /// Optimal `N0` and the scaling factors `alpha_1..alpha_l` in the original
    /// basis for the scaled row `a~_l`.
    pub(crate) fn optimise(&self, a_tilde: &[f64], power: f64) -> (f64, Vec<f64>) {
        let prefix = self.u.len();
        let ul = self.residual_channel();
        let ul_sq = dot(&ul, &ul);

        // Coefficients of the optimal point on the u basis.
        let mut x = vec![0.0; prefix];
        let mut eta = vec![0.0; prefix];
        let mut reduction = 0.0;
        for i in 0..prefix {
            if !self.active[i] {
                continue;
            }
            let ip = dot(a_tilde, &self.u[i]);
            x[i] = ip / self.norm_sq[i];
            eta[i] = dot(&self.h_eff, &self.u[i]) / self.norm_sq[i];
            reduction += ip * ip / self.norm_sq[i];
        }
        let ipl = dot(a_tilde, &ul);
        let alpha_l = power * ipl / (power * ul_sq + 1.0);
        let n0 = power * (dot(a_tilde, a_tilde) - reduction) - power * power * ipl * ipl / (1.0 + power * ul_sq);

        // Solve sum_j alpha_j a~_j = alpha_l h - x (restricted to the prefix span)
        // by back-substitution through the triangular Gram-Schmidt relation.
        let mut alphas = vec![0.0; prefix + 1];
        alphas[prefix] = alpha_l;
        for i in (0..prefix).rev() {
            if !self.active[i] {
                continue;
            }
            let target = alpha_l * eta[i] - x[i];
            let carried: f64 = (i + 1..prefix).map(|j| alphas[j] * self.mu[j][i]).sum();
            alphas[i] = target - carried;
        }
        (n0.max(0.0), alphas)
    }

    pub(crate) fn orthogonal_basis(&self) -> Vec<Vec<f64>> {
        self.u.clone()
    }

    pub(crate) fn dropped(&self) -> Vec<bool> {
        self.active.iter().map(|a| !a).collect()
    }
}

/// Matrices behind the closed-form minimum for the last row of a chain.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub c: DMatrix<f64>,
    /// `u_1, .., u_l`; the last one is built from `h_eff`.
    pub u: Vec<Vec<f64>>,
    /// Which of `u_1..u_{l-1}` were excluded from the projector as degenerate.
    pub dropped: Vec<bool>,
    pub b: DMatrix<f64>,
    pub h_eff: Vec<f64>,
    /// `a~_1, .., a~_{l-1}`.
    pub a_tilde: Vec<Vec<f64>>,
    power: f64,
}

impl QuadraticForm {
    /// `P a^T B a`.
    pub fn noise(&self, row: &[i64]) -> f64 {
        let n = row.len();
        let mut acc = 0.0;
        for r in 0..n {
            if row[r] == 0 {
                continue;
            }
            let mut inner = 0.0;
            for c in 0..n {
                inner += self.b[(r, c)] * row[c] as f64;
            }
            acc += row[r] as f64 * inner;
        }
        (self.power * acc).max(0.0)
    }
}

/// Builds `C`, the Gram-Schmidt vectors and `B_l` for the last row of `chain`.
pub fn build_quadratic_form(
    config: &ChannelConfig,
    params: &SchemeParams,
    chain: &CoeffChain,
) -> Result<QuadraticForm, CfError> {
    chain.check(config.users)?;
    let eff = effective_channel(config, params);
    let mut side = SideInfo::new(eff.h_eff.clone());
    let a_tilde: Vec<Vec<f64>> = chain.rows[..chain.len() - 1]
        .iter()
        .map(|r| scaled_row(params, r))
        .collect();
    for a in &a_tilde {
        side.push(a);
    }
    Ok(form_from_side(params, &side, config.power, a_tilde))
}

pub(crate) fn form_from_side(
    params: &SchemeParams,
    side: &SideInfo,
    power: f64,
    a_tilde: Vec<Vec<f64>>,
) -> QuadraticForm {
    let c = scaling_matrix(params);
    let m = side.middle_matrix(power);
    let mut b = &c * m * c.transpose();
    // Symmetrise away rounding.
    let bt = b.transpose();
    b = (b + bt) * 0.5;
    let mut u = side.orthogonal_basis();
    u.push(side.residual_channel());
    QuadraticForm {
        c,
        u,
        dropped: side.dropped(),
        b,
        h_eff: side.h_eff.clone(),
        a_tilde,
        power,
    }
}

/// Rates, optimal noise and scaling factors for one decoded sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputationResult {
    /// `r_k` for every user, index 0 is the primary user.
    pub rates: Vec<f64>,
    pub noise_var: f64,
    pub alphas: Vec<f64>,
    /// The noise vanished and at least one rate was replaced by the cap.
    pub capped: bool,
}

pub(crate) fn rates_from_noise(
    sigma_sq: &[f64],
    noise: f64,
    zero_tol: f64,
    opts: &RateOptions,
) -> (Vec<f64>, bool) {
    let mut capped = false;
    let rates = sigma_sq
        .iter()
        .map(|&s| {
            if s <= 0.0 {
                0.0
            } else if noise <= zero_tol {
                capped = true;
                opts.rate_cap
            } else {
                half_log2_plus(s / noise).min(opts.rate_cap)
            }
        })
        .collect();
    (rates, capped)
}

/// Threshold under which `N0` is treated as exactly zero.
pub(crate) fn zero_noise_tol(power: f64, a_tilde: &[f64]) -> f64 {
    1e-12 * power * dot(a_tilde, a_tilde).max(1.0)
}

/// Computation rates for the last row of `chain`, using every earlier row as
/// side information.
pub fn computation_rates(
    config: &ChannelConfig,
    params: &SchemeParams,
    chain: &CoeffChain,
    opts: &RateOptions,
) -> Result<ComputationResult, CfError> {
    chain.check(config.users)?;
    let eff = effective_channel(config, params);
    let mut side = SideInfo::new(eff.h_eff.clone());
    for row in &chain.rows[..chain.len() - 1] {
        side.push(&scaled_row(params, row));
    }
    Ok(evaluate_row(&eff, params, &side, chain.rows.last().unwrap(), config.power, opts))
}

pub(crate) fn evaluate_row(
    eff: &EffectiveChannel,
    params: &SchemeParams,
    side: &SideInfo,
    row: &[i64],
    power: f64,
    opts: &RateOptions,
) -> ComputationResult {
    let a_tilde = scaled_row(params, row);
    let (noise_var, alphas) = side.optimise(&a_tilde, power);
    let (rates, capped) =
        rates_from_noise(&eff.sigma_sq, noise_var, zero_noise_tol(power, &a_tilde), opts);
    ComputationResult {
        rates,
        noise_var,
        alphas,
        capped,
    }
}

/// Best rate of cognitive receiver `k` decoding its own lattice point directly:
/// `max_nu 1/2 log^+ sigma_k^2 / N_k`, with
/// `N_k = nu^2 + (nu h - beta)^2 (1 - lambda) P + (nu sqrt(lambda) h - gamma)^2 P`.
pub fn cognitive_receiver_rate(h: f64, lambda: f64, beta: f64, gamma: f64, power: f64) -> f64 {
    let lbar = 1.0 - lambda;
    let sigma_sq = lbar * beta * beta * power;
    if sigma_sq <= 0.0 {
        return 0.0;
    }
    // N_k(nu) = q nu^2 - 2 s nu + t
    let q = 1.0 + h * h * power;
    let s = h * power * (beta * lbar + lambda.sqrt() * gamma);
    let t = power * (beta * beta * lbar + gamma * gamma);
    let n_min = (t - s * s / q).max(0.0);
    if n_min <= 1e-15 * t.max(1.0) {
        return RateOptions::default().rate_cap;
    }
    half_log2_plus(sigma_sq / n_min)
}

/// `gamma_k = nu_k^* sqrt(lambda_k) h_k`, which removes `x0`
/// from cognitive receiver `k`.
pub fn dpc_gamma(h: f64, lambda: f64, beta: f64, power: f64) -> f64 {
    let lbar = 1.0 - lambda;
    let nu = beta * h * lbar * power / (lbar * h * h * power + 1.0);
    nu * lambda.sqrt() * h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    /// Decodable, but some required computation rate is in `(0, 1e-9]`.
    Degenerate,
    /// Sum `sum` (0-based) cannot carry user `user`: `r_user <= 0`.
    Infeasible { sum: usize, user: usize },
}

/// Rate tuple of a coefficient matrix together with its per-sum details.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Rates {
    pub point: RatePoint,
    pub feasibility: Feasibility,
    pub per_sum: Vec<ComputationResult>,
    pub capped: bool,
}

impl Theorem1Rates {
    pub fn is_feasible(&self) -> bool {
        !matches!(self.feasibility, Feasibility::Infeasible { .. })
    }
}

/// Assembles `R_0 = min_{l in L_0} r_0` and
/// `R_k = min(min_{l in L_k} r_k, direct rate of receiver k)`.
pub fn theorem1_rates(
    config: &ChannelConfig,
    params: &SchemeParams,
    matrix: &CoeffMatrix,
    opts: &RateOptions,
) -> Result<Theorem1Rates, CfError> {
    if matrix.cols() != config.users + 1 {
        return Err(CfError::Dimension(format!(
            "matrix has {} columns for K = {}",
            matrix.cols(),
            config.users
        )));
    }
    if !is_valid(matrix) {
        return Err(CfError::InvalidMatrix);
    }
    let eff = effective_channel(config, params);
    let mut side = SideInfo::new(eff.h_eff.clone());
    let mut per_sum = Vec::with_capacity(matrix.rows());
    for row in matrix.row_iter() {
        per_sum.push(evaluate_row(&eff, params, &side, row, config.power, opts));
        side.push(&scaled_row(params, row));
    }
    Ok(assemble(config, params, matrix, per_sum))
}

pub(crate) fn direct_rates(config: &ChannelConfig, params: &SchemeParams) -> Vec<f64> {
    (0..config.users)
        .map(|k| {
            cognitive_receiver_rate(
                config.direct[k],
                params.lambda[k],
                params.beta[k + 1],
                params.gamma[k],
                config.power,
            )
        })
        .collect()
}

pub(crate) fn assemble(
    config: &ChannelConfig,
    params: &SchemeParams,
    matrix: &CoeffMatrix,
    per_sum: Vec<ComputationResult>,
) -> Theorem1Rates {
    assemble_with_direct(&direct_rates(config, params), matrix, per_sum)
}

pub(crate) fn assemble_with_direct(
    direct: &[f64],
    matrix: &CoeffMatrix,
    per_sum: Vec<ComputationResult>,
) -> Theorem1Rates {
    let n = direct.len() + 1;
    let mut rates = vec![f64::INFINITY; n];
    let mut feasibility = Feasibility::Feasible;
    let mut capped = false;
    for (l, (row, res)) in matrix.row_iter().zip(&per_sum).enumerate() {
        for k in 0..n {
            if row[k] == 0 {
                continue;
            }
            let r = res.rates[k];
            capped |= res.capped;
            if r <= 0.0 {
                if !matches!(feasibility, Feasibility::Infeasible { .. }) {
                    feasibility = Feasibility::Infeasible { sum: l, user: k };
                }
            } else if r <= DEGENERATE_RATE && feasibility == Feasibility::Feasible {
                feasibility = Feasibility::Degenerate;
            }
            rates[k] = rates[k].min(r);
        }
    }
    for k in 1..n {
        rates[k] = rates[k].min(direct[k - 1]);
    }
    // Column 0 is nonzero in every valid matrix, so R_0 is always constrained.
    if rates[0].is_infinite() {
        rates[0] = 0.0;
    }
    Theorem1Rates {
        point: RatePoint::new(rates),
        feasibility,
        per_sum,
        capped,
    }
}
