//! Rate regions swept over `(lambda, beta, gamma)` and coefficient matrices,
//! their Pareto frontiers, and the symmetric-channel checks.
//!
//! `beta_0` is pinned to 1 throughout: scaling `(beta, gamma)` by a common
//! factor leaves every rate unchanged.

use std::cmp::Ordering;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{dpc_rates, snd_rates, trivial_bounds};
use crate::cf_rates::{capacity, cognitive_receiver_rate, dpc_gamma, half_log2_plus, theorem1_rates, RateOptions, Theorem1Rates};
use crate::channel_model::{effective_channel, ChannelConfig, GridOverrides, RatePoint, SchemeParams};
use crate::coeff_search::{
    best_matrix, default_a_max, search_chains, symmetric_candidates, ChainVisitor, CoeffMatrix, Flow,
    Objective, SearchBudget,
};

/// Slack for the exact-value claims of the symmetric-channel theorem.
pub const THEOREM3_TOL: f64 = 1e-9;

/// Two sum rates closer than this count as equal when picking the optimal `L`.
pub const SUM_RATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid sweep grid: {0}")]
    Grid(String),
    #[error("no feasible rate point over {0} parameter choices")]
    Empty(usize),
    #[error("channel is not symmetric")]
    NotSymmetric,
    #[error("expected a K = 3 channel, got K = {0}")]
    NotThreeUsers(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambda_steps: usize,
    pub beta_steps: usize,
    pub gamma_steps: usize,
    pub beta_range: [f64; 2],
    /// `None` spans `[-sqrt(P) max|h|, sqrt(P) max|h|]`.
    pub gamma_range: Option<[f64; 2]>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambda_steps: 21,
            beta_steps: 17,
            gamma_steps: 9,
            beta_range: [0.125, 8.0],
            gamma_range: None,
        }
    }
}

impl SweepGrid {
    /// The single point `lambda = 0`, `beta`, `gamma`.
    pub fn single(beta: f64, gamma: f64) -> Self {
        Self {
            lambda_steps: 1,
            beta_steps: 1,
            gamma_steps: 1,
            beta_range: [beta, beta],
            gamma_range: Some([gamma, gamma]),
        }
    }

    pub fn with_overrides(mut self, o: &GridOverrides) -> Self {
        if let Some(n) = o.lambda_steps {
            self.lambda_steps = n;
        }
        if let Some(n) = o.beta_steps {
            self.beta_steps = n;
        }
        if let Some(n) = o.gamma_steps {
            self.gamma_steps = n;
        }
        if let Some(r) = o.beta_range {
            self.beta_range = r;
        }
        if let Some(r) = o.gamma_range {
            self.gamma_range = Some(r);
        }
        self
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        if self.lambda_steps == 0 || self.beta_steps == 0 || self.gamma_steps == 0 {
            return Err(RegionError::Grid("every step count must be at least 1".into()));
        }
        let [lo, hi] = self.beta_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(RegionError::Grid(format!("beta range [{lo}, {hi}] must satisfy 0 < lo <= hi")));
        }
        if let Some([lo, hi]) = self.gamma_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(RegionError::Grid(format!("gamma range [{lo}, {hi}] must satisfy lo <= hi")));
            }
        }
        Ok(())
    }

    /// Uniform on `[0, 1]`; a single step gives `{0}`.
    pub fn lambdas(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.lambda_steps)
    }

    /// Log-uniform on `beta_range`.
    pub fn betas(&self) -> Vec<f64> {
        let [lo, hi] = self.beta_range;
        linspace(lo.log2(), hi.log2(), self.beta_steps)
            .into_iter()
            .map(f64::exp2)
            .collect()
    }

    pub fn gammas(&self, config: &ChannelConfig) -> Vec<f64> {
        let [lo, hi] = self.gamma_range.unwrap_or_else(|| {
            let g = config.power.sqrt() * config.direct.iter().fold(0.0f64, |m, h| m.max(h.abs()));
            [-g, g]
        });
        linspace(lo, hi, self.gamma_steps)
    }

    /// Every tied `(lambda, beta, gamma)` on the grid, plus for each
    /// `(lambda, beta)` the per-user `gamma` that cancels `x_0` at the
    /// cognitive receivers.
    pub fn cognitive_params(&self, config: &ChannelConfig) -> Vec<SchemeParams> {
        let k = config.users;
        let gammas = self.gammas(config);
        let mut out = Vec::new();
        for &lambda in &self.lambdas() {
            for &beta in &self.betas() {
                let start = out.len();
                for &g in &gammas {
                    out.push(SchemeParams::tied(k, lambda, 1.0, beta, g));
                }
                let mut dpc = SchemeParams::tied(k, lambda, 1.0, beta, 0.0);
                for (j, g) in dpc.gamma.iter_mut().enumerate() {
                    *g = dpc_gamma(config.direct[j], lambda, beta, config.power);
                }
                if !out[start..].contains(&dpc) {
                    out.push(dpc);
                }
            }
        }
        out
    }

    /// The `lambda = gamma = 0` slice.
    pub fn noncognitive_params(&self, config: &ChannelConfig) -> Vec<SchemeParams> {
        self.betas()
            .into_iter()
            .map(|beta| SchemeParams::tied(config.users, 0.0, 1.0, beta, 0.0))
            .collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Which coefficient matrices a sweep tries at each parameter point.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidates {
    /// [`Candidates::Symmetric`] on symmetric channels, chain search otherwise.
    Auto,
    Symmetric,
    /// Best chain per objective direction.
    Chains,
    Fixed(Vec<CoeffMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionBudget {
    /// Entry bound; `None` uses [`symmetric_c_max`] for symmetric candidates
    /// and the norm bound for chain search.
    pub a_max: Option<i64>,
    /// `None` means `K + 1`.
    pub l_max: Option<usize>,
    pub candidates: Candidates,
    /// Per chain search.
    pub deadline: Option<Duration>,
    pub opts: RateOptions,
}

impl Default for RegionBudget {
    fn default() -> Self {
        Self {
            a_max: None,
            l_max: None,
            candidates: Candidates::Auto,
            deadline: None,
            opts: RateOptions::default(),
        }
    }
}

impl RegionBudget {
    fn search_budget(&self, config: &ChannelConfig, params: &SchemeParams) -> SearchBudget {
        SearchBudget {
            a_max: self.a_max.unwrap_or_else(|| default_a_max(config, params)),
            l_max: self.l_max.unwrap_or(config.users + 1),
            deadline: self.deadline,
        }
    }

    fn matrices(&self, config: &ChannelConfig) -> Option<Vec<CoeffMatrix>> {
        let symmetric = || symmetric_candidates(config.users, self.a_max.unwrap_or_else(|| symmetric_c_max(config)));
        match &self.candidates {
            Candidates::Fixed(list) => Some(list.clone()),
            Candidates::Symmetric => Some(symmetric()),
            Candidates::Auto if config.is_symmetric() => Some(symmetric()),
            _ => None,
        }
    }
}

/// Default `c_max` for the symmetric family: `ceil(sqrt(P)) + 1`.
pub fn symmetric_c_max(config: &ChannelConfig) -> i64 {
    config.power.sqrt().ceil() as i64 + 1
}

/// Objective directions tried by chain-search sweeps: weights on `R_0` and
/// the mean cognitive rate, plus the max-min direction.
pub fn directions(users: usize) -> Vec<Objective> {
    let mut out: Vec<Objective> = [1.0, 0.75, 0.5, 0.25, 0.0]
        .iter()
        .map(|&w| {
            let mut v = vec![(1.0 - w) / users as f64; users + 1];
            v[0] = w;
            Objective::Weighted(v)
        })
        .collect();
    out.push(Objective::MaxSymmetric);
    out
}

/// A collected point with the choices that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPoint {
    pub point: RatePoint,
    pub matrix: CoeffMatrix,
    pub params: SchemeParams,
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRegion {
    /// The non-dominated points of every parameter choice, in grid order.
    pub points: Vec<RegionPoint>,
    /// Parameter choices swept.
    pub parameter_points: usize,
    /// Some chain search hit its deadline.
    pub truncated: bool,
}

impl RateRegion {
    pub fn frontier(&self) -> impl Iterator<Item = &RegionPoint> + '_ {
        self.points.iter().filter(|p| p.frontier)
    }
}

/// Coordinates compared for dominance: the full tuple for `K <= 3`,
/// `(R_0, min_k R_k)` beyond.
pub fn pareto_key(point: &RatePoint) -> Vec<f64> {
    if point.rates.len() <= 4 {
        point.rates.clone()
    } else {
        vec![point.primary(), point.min_cognitive()]
    }
}

/// Indices of the Pareto-maximal points in increasing order. Of several
/// identical points only the first is kept.
pub fn pareto_indices(points: &[RatePoint]) -> Vec<usize> {
    let keys: Vec<Vec<f64>> = points.iter().map(pareto_key).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        keys[j]
            .iter()
            .zip(&keys[i])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let covered = kept
            .iter()
            .any(|&j| keys[j].iter().zip(&keys[i]).all(|(a, b)| a >= b));
        if !covered {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

fn evaluate(
    config: &ChannelConfig,
    params: &SchemeParams,
    matrices: Option<&[CoeffMatrix]>,
    budget: &RegionBudget,
) -> (Vec<RegionPoint>, bool) {
    let mut found: Vec<(CoeffMatrix, Theorem1Rates)> = Vec::new();
    let mut truncated = false;
    match matrices {
        Some(list) => {
            for m in list {
                if let Ok(r) = theorem1_rates(config, params, m, &budget.opts) {
                    if r.is_feasible() {
                        found.push((m.clone(), r));
                    }
                }
            }
        }
        None => {
            let search = budget.search_budget(config, params);
            for objective in directions(config.users) {
                if let Ok(best) = best_matrix(config, params, &search, &objective, &budget.opts) {
                    truncated |= best.truncated;
                    if !found.iter().any(|(m, _)| *m == best.matrix) {
                        found.push((best.matrix, best.rates));
                    }
                }
            }
        }
    }
    let rates: Vec<RatePoint> = found.iter().map(|(_, r)| r.point.clone()).collect();
    let points = pareto_indices(&rates)
        .into_iter()
        .map(|i| RegionPoint {
            point: rates[i].clone(),
            matrix: found[i].0.clone(),
            params: params.clone(),
            frontier: false,
        })
        .collect();
    (points, truncated)
}

fn sweep(
    config: &ChannelConfig,
    grid: &SweepGrid,
    params: Vec<SchemeParams>,
    budget: &RegionBudget,
) -> Result<RateRegion, RegionError> {
    config.validate().map_err(|e| RegionError::Config(e.to_string()))?;
    grid.validate()?;
    let matrices = budget.matrices(config);
    let per_point: Vec<(Vec<RegionPoint>, bool)> = params
        .par_iter()
        .map(|p| evaluate(config, p, matrices.as_deref(), budget))
        .collect();
    let truncated = per_point.iter().any(|(_, t)| *t);
    let mut points: Vec<RegionPoint> = per_point.into_iter().flat_map(|(p, _)| p).collect();
    if points.is_empty() {
        return Err(RegionError::Empty(params.len()));
    }
    let rates: Vec<RatePoint> = points.iter().map(|p| p.point.clone()).collect();
    for i in pareto_indices(&rates) {
        points[i].frontier = true;
    }
    Ok(RateRegion {
        points,
        parameter_points: params.len(),
        truncated,
    })
}

/// Region of the cognitive channel over tied parameters on `grid`.
pub fn cognitive_region(
    config: &ChannelConfig,
    grid: &SweepGrid,
    budget: &RegionBudget,
) -> Result<RateRegion, RegionError> {
    sweep(config, grid, grid.cognitive_params(config), budget)
}

/// Region without cognition: `lambda = gamma = 0`, so receiver `k` sees
/// `1/2 log2(1 + h_k^2 P)`.
pub fn noncognitive_region(
    config: &ChannelConfig,
    grid: &SweepGrid,
    budget: &RegionBudget,
) -> Result<RateRegion, RegionError> {
    sweep(config, grid, grid.noncognitive_params(config), budget)
}

/// Pareto-maximal DPC tuples over tied power splits.
pub fn dpc_frontier(config: &ChannelConfig, lambdas: &[f64]) -> Vec<(f64, RatePoint)> {
    let pts: Vec<(f64, RatePoint)> = lambdas
        .iter()
        .filter_map(|&l| dpc_rates(config, &vec![l; config.users]).ok().map(|p| (l, p)))
        .collect();
    keep_frontier(pts)
}

/// Pareto-maximal SND tuples: for each tied power split, cognitive rates
/// on `levels` uniform steps up to their direct bounds, with the largest
/// compatible `R_0`.
pub fn snd_frontier(config: &ChannelConfig, lambdas: &[f64], levels: usize) -> Vec<(f64, RatePoint)> {
    let mut pts = Vec::new();
    for &l in lambdas {
        let Ok(region) = snd_rates(config, &vec![l; config.users]) else {
            continue;
        };
        for t in linspace(0.0, 1.0, levels.max(1)) {
            let cognitive: Vec<f64> = region.direct.iter().map(|c| t * c.bound).collect();
            if let Some(r0) = region.max_primary(&cognitive) {
                let mut rates = vec![r0];
                rates.extend(cognitive);
                pts.push((l, RatePoint::new(rates)));
            }
        }
    }
    keep_frontier(pts)
}

fn keep_frontier(pts: Vec<(f64, RatePoint)>) -> Vec<(f64, RatePoint)> {
    let rates: Vec<RatePoint> = pts.iter().map(|(_, p)| p.clone()).collect();
    pareto_indices(&rates).into_iter().map(|i| pts[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricRate {
    /// `max min(R_0, R_1)`.
    pub value: f64,
    pub point: RatePoint,
    pub matrix: CoeffMatrix,
    pub params: SchemeParams,
}

/// Largest symmetric rate of a symmetric cognitive channel over tied
/// parameters and the symmetric candidate family.
pub fn max_symmetric_rate(
    config: &ChannelConfig,
    grid: &SweepGrid,
    budget: &RegionBudget,
) -> Result<SymmetricRate, RegionError> {
    config.validate().map_err(|e| RegionError::Config(e.to_string()))?;
    grid.validate()?;
    if !config.is_symmetric() {
        return Err(RegionError::NotSymmetric);
    }
    let matrices = match &budget.candidates {
        Candidates::Fixed(list) => list.clone(),
        _ => symmetric_candidates(config.users, budget.a_max.unwrap_or_else(|| symmetric_c_max(config))),
    };
    let params = grid.cognitive_params(config);
    // min(R_0, R_k) <= min(1/2 log2(1 + b0^2 P), direct rate); visiting the
    // parameter points by decreasing ceiling lets the scan stop early.
    let mut order: Vec<(f64, usize)> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let eff = effective_channel(config, p);
            let mut ceiling = capacity(eff.b0 * eff.b0 * config.power);
            for k in 0..config.users {
                ceiling = ceiling.min(cognitive_receiver_rate(
                    config.direct[k],
                    p.lambda[k],
                    p.beta[k + 1],
                    p.gamma[k],
                    config.power,
                ));
            }
            (ceiling, i)
        })
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut best: Option<SymmetricRate> = None;
    for (ceiling, i) in order {
        if best.as_ref().is_some_and(|b| ceiling <= b.value) {
            break;
        }
        let p = &params[i];
        for m in &matrices {
            let Ok(r) = theorem1_rates(config, p, m, &budget.opts) else {
                continue;
            };
            if !r.is_feasible() {
                continue;
            }
            let value = r.point.symmetric();
            if best.as_ref().is_none_or(|b| value > b.value) {
                best = Some(SymmetricRate {
                    value,
                    point: r.point,
                    matrix: m.clone(),
                    params: p.clone(),
                });
            }
        }
    }
    best.ok_or(RegionError::Empty(params.len()))
}

/// One of the two constructive strategies of the symmetric-channel theorem.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub matrix: CoeffMatrix,
    pub params: SchemeParams,
    pub point: RatePoint,
    /// Trivial bound minus achieved rate, per user.
    pub gaps: Vec<f64>,
    /// Claimed lower bounds on `(R_0, R_k)`.
    pub claimed: (f64, f64),
    /// The achieved rates fall short of the claim.
    pub falsified: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report {
    pub power: f64,
    pub h: f64,
    pub users: usize,
    pub b: f64,
    pub bound: RatePoint,
    /// `A = [[1, c, .., c], [0, 1, .., 1]]`, `beta_k = b / c`, `c = ceil(sqrt(P))`;
    /// absent when `b = 0`.
    pub first: Option<StrategyReport>,
    /// `A = [[0, 1, .., 1], [1, 0, .., 0]]`.
    pub second: StrategyReport,
    /// `P <= 1`: every gap is at most `1/2 log2(1 + P) <= 0.5` on the primary link.
    pub vacuous: bool,
    /// `|b| >= |h| ceil(sqrt(P))` with `P > 1`.
    pub gap_regime: bool,
    /// `|b| >= sqrt((1 + P)(1 + h^2 P) / P)`.
    pub capacity_regime: bool,
    /// Assertions that failed within their regime.
    pub failures: Vec<String>,
}

impl Theorem3Report {
    /// Per-user gaps of whichever strategy has the smaller worst gap.
    pub fn gaps(&self) -> Vec<f64> {
        let worst = |g: &[f64]| g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match &self.first {
            Some(f) if worst(&f.gaps) < worst(&self.second.gaps) => f.gaps.clone(),
            _ => self.second.gaps.clone(),
        }
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Some strategy meets every trivial bound within [`THEOREM3_TOL`].
    pub fn capacity_achieved(&self) -> bool {
        self.gaps().iter().all(|g| *g <= THEOREM3_TOL)
    }

    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

fn strategy(
    config: &ChannelConfig,
    params: SchemeParams,
    matrix: CoeffMatrix,
    bound: &RatePoint,
    claimed: (f64, f64),
) -> StrategyReport {
    let point = theorem1_rates(config, &params, &matrix, &RateOptions::default())
        .expect("strategy matrices are valid")
        .point;
    let gaps = bound.rates.iter().zip(&point.rates).map(|(c, r)| c - r).collect();
    let mut falsified = Vec::new();
    if point.primary() < claimed.0 - THEOREM3_TOL {
        falsified.push(format!("R0 = {} < {}", point.primary(), claimed.0));
    }
    if point.min_cognitive() < claimed.1 - THEOREM3_TOL {
        falsified.push(format!("Rk = {} < {}", point.min_cognitive(), claimed.1));
    }
    StrategyReport {
        matrix,
        params,
        point,
        gaps,
        claimed,
        falsified,
    }
}

/// Evaluates both strategies on the symmetric non-cognitive channel
/// `(P, h, K, b)` and checks the claims that apply to this `b`.
pub fn theorem3_check(power: f64, h: f64, users: usize, b: f64) -> Theorem3Report {
    let (h, b) = (h.abs(), b.abs());
    let config = ChannelConfig::symmetric(users, power, b, h);
    let bound = trivial_bounds(&config);
    let direct = capacity(h * h * power);
    let c = power.sqrt().ceil().max(1.0);

    let first = (b > 0.0).then(|| {
        let mut top = vec![c as i64; users + 1];
        top[0] = 1;
        let mut ones = vec![1i64; users + 1];
        ones[0] = 0;
        let claim_k = half_log2_plus(b * b * power / (c * c))
            .min(half_log2_plus(b * b))
            .min(direct);
        strategy(
            &config,
            SchemeParams::tied(users, 0.0, 1.0, b / c, 0.0),
            CoeffMatrix::from_rows(vec![top, ones]),
            &bound,
            (half_log2_plus(power), claim_k),
        )
    });

    let mut ones = vec![1i64; users + 1];
    ones[0] = 0;
    let mut e0 = vec![0i64; users + 1];
    e0[0] = 1;
    let claim_k = half_log2_plus(power * b * b / (1.0 + power)).min(direct);
    let second = strategy(
        &config,
        SchemeParams::tied(users, 0.0, 1.0, 1.0, 0.0),
        CoeffMatrix::from_rows(vec![ones, e0]),
        &bound,
        (capacity(power), claim_k),
    );

    let vacuous = power <= 1.0;
    let gap_regime = !vacuous && b >= h * c;
    let capacity_regime = b * b >= (1.0 + power) * (1.0 + h * h * power) / power * (1.0 - 1e-12);

    let mut report = Theorem3Report {
        power,
        h,
        users,
        b,
        bound,
        first,
        second,
        vacuous,
        gap_regime,
        capacity_regime,
        failures: Vec::new(),
    };
    let mut failures = Vec::new();
    if gap_regime {
        if let Some(f) = &report.first {
            failures.extend(f.falsified.iter().map(|s| format!("strategy 1: {s}")));
        }
        let gap = report.max_gap();
        if gap > 0.5 + THEOREM3_TOL {
            failures.push(format!("gap {gap} exceeds 0.5 bit"));
        }
    }
    if capacity_regime {
        let s = &report.second;
        if (s.point.primary() - s.claimed.0).abs() > THEOREM3_TOL {
            failures.push(format!("strategy 2: R0 = {} != {}", s.point.primary(), s.claimed.0));
        }
        failures.extend(s.falsified.iter().map(|x| format!("strategy 2: {x}")));
        if !report.capacity_achieved() {
            failures.push(format!("capacity missed by {}", report.max_gap()));
        }
    }
    report.failures = failures;
    report
}

/// Points of the `(b_2, b_3)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Grid2d {
    /// `steps x steps` uniform points on `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64, steps: usize) -> Self {
        let axis = linspace(lo, hi, steps.max(1));
        Self {
            b2: axis.clone(),
            b3: axis,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLCell {
    pub b2: f64,
    pub b3: f64,
    /// Smallest `L` whose best sum rate is within [`SUM_RATE_TOL`] of the maximum.
    pub l_opt: usize,
    pub sum_rate: f64,
    /// Best sum rate per `L = 1, 2, ..`; `None` when no chain of that length is feasible.
    pub per_l: Vec<Option<f64>>,
    pub matrix: CoeffMatrix,
    pub params: SchemeParams,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLMap {
    /// Row-major over `(b2, b3)`, `b3` fastest.
    pub cells: Vec<OptimalLCell>,
}

/// Best sum rate per chain length, shared across every `beta` of one grid point.
struct SumRateByLength {
    best: Vec<Option<(f64, CoeffMatrix, usize)>>,
    current: usize,
}

impl SumRateByLength {
    fn max(&self) -> Option<f64> {
        self.best.iter().flatten().map(|b| b.0).reduce(f64::max)
    }

    /// Chain length of the optimum, with its entry.
    fn optimum(&self) -> Option<(usize, &(f64, CoeffMatrix, usize))> {
        let s = self.max()?;
        self.best
            .iter()
            .enumerate()
            .find_map(|(l, b)| b.as_ref().filter(|b| b.0 >= s - SUM_RATE_TOL).map(|b| (l, b)))
    }
}

impl ChainVisitor for SumRateByLength {
    fn visit(&mut self, matrix: &CoeffMatrix, rates: &Theorem1Rates) -> Flow {
        if rates.is_feasible() {
            let s = rates.point.sum();
            let slot = &mut self.best[matrix.rows()];
            if slot.as_ref().is_none_or(|b| s > b.0) {
                *slot = Some((s, matrix.clone(), self.current));
            }
        }
        Flow::Continue
    }

    fn requirements(&mut self, prefix: &[Vec<i64>], ceiling: &[f64]) -> Option<Vec<f64>> {
        let Some((l_opt, _)) = self.optimum() else {
            return Some(vec![f64::NEG_INFINITY; ceiling.len()]);
        };
        let s = self.max().unwrap_or(f64::NEG_INFINITY);
        // Shorter chains may still take over the optimum by coming within
        // the tolerance; longer ones must beat it outright.
        let target = if prefix.len() + 1 < l_opt { s - SUM_RATE_TOL } else { s };
        let total: f64 = ceiling.iter().sum();
        if total <= target {
            return None;
        }
        Some(ceiling.iter().map(|c| target - (total - c)).collect())
    }

    fn minimal_supports(&self) -> bool {
        true
    }
}

/// Scalings tried per grid point: `beta_0 = 1`, the tensor grid of
/// `grid.betas()`, and the channel-aligned vectors `beta_k = t b_k / a_k`
/// with `t` on the same grid and `a_k in {1, 2, 3}`.
pub fn optimal_l_betas(cross: &[f64], grid: &SweepGrid) -> Vec<Vec<f64>> {
    let ts = grid.betas();
    let k = cross.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut push = |v: Vec<f64>| {
        if !out.contains(&v) {
            out.push(v);
        }
    };
    for &t in &ts {
        for code in 0..3usize.pow(k as u32) {
            let mut v = vec![1.0];
            let mut c = code;
            for &b in cross {
                let a = (c % 3 + 1) as f64;
                c /= 3;
                v.push(if b > 0.0 { t * b / a } else { t });
            }
            push(v);
        }
    }
    for code in 0..ts.len().pow(k as u32) {
        let mut v = vec![1.0];
        let mut c = code;
        for _ in 0..k {
            v.push(ts[c % ts.len()]);
            c /= ts.len();
        }
        push(v);
    }
    out
}

/// For a `K = 3` non-cognitive family with `b_1` and `h` taken from `base`,
/// finds at every `(b_2, b_3)` the number of decoded sums that maximises the
/// sum rate over `A` and `beta`.
pub fn optimal_l_map(
    base: &ChannelConfig,
    points: &Grid2d,
    grid: &SweepGrid,
    budget: &RegionBudget,
) -> Result<OptimalLMap, RegionError> {
    base.validate().map_err(|e| RegionError::Config(e.to_string()))?;
    grid.validate()?;
    if base.users != 3 {
        return Err(RegionError::NotThreeUsers(base.users));
    }
    let mut coords = Vec::with_capacity(points.b2.len() * points.b3.len());
    for &b2 in &points.b2 {
        for &b3 in &points.b3 {
            coords.push((b2, b3));
        }
    }
    let cells = coords
        .par_iter()
        .map(|&(b2, b3)| {
            let mut config = base.clone();
            config.cross[1] = b2;
            config.cross[2] = b3;
            config.validate().map_err(|e| RegionError::Config(e.to_string()))?;
            optimal_l_cell(&config, grid, budget)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OptimalLMap { cells })
}

fn optimal_l_cell(config: &ChannelConfig, grid: &SweepGrid, budget: &RegionBudget) -> Result<OptimalLCell, RegionError> {
    let k = config.users;
    let betas = optimal_l_betas(&config.cross, grid);
    let plain = SchemeParams::plain(k);
    let search = budget.search_budget(config, &plain);
    let mut visitor = SumRateByLength {
        best: vec![None; search.l_max + 1],
        current: 0,
    };
    let mut truncated = false;
    for (i, beta) in betas.iter().enumerate() {
        visitor.current = i;
        let params = SchemeParams {
            beta: beta.clone(),
            ..plain.clone()
        };
        truncated |= search_chains(config, &params, &search, &budget.opts, &mut visitor).truncated;
    }
    let (l_opt, (sum_rate, matrix, idx)) = visitor.optimum().ok_or(RegionError::Empty(betas.len()))?;
    Ok(OptimalLCell {
        b2: config.cross[1],
        b3: config.cross[2],
        l_opt,
        sum_rate: *sum_rate,
        per_l: visitor.best.iter().skip(1).map(|b| b.as_ref().map(|b| b.0)).collect(),
        matrix: matrix.clone(),
        params: SchemeParams {
            beta: betas[*idx].clone(),
            ..plain
        },
        truncated,
    })
}
