//! Conventional schemes and outer bounds to compare against.
//!
//! * DPC at the cognitive transmitters with interference treated as noise at Rx 0.
//! * Simultaneous nonunique decoding (SND) at Rx 0, given as half-spaces.
//! * Trivial point-to-point bounds.
//! * The capacity region of the two-receiver MIMO broadcast channel obtained
//!   by letting all transmitters and all cognitive receivers cooperate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf_rates::capacity;
use crate::channel_model::{ChannelConfig, RatePoint};

/// Largest `K` for which the SND subset constraints are enumerated.
pub const SND_MAX_USERS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("SND region needs 2^K subset constraints; K = {0} exceeds {SND_MAX_USERS}")]
    TooManyUsers(usize),
    #[error("expected {expected} power splits, got {got}")]
    LambdaLength { expected: usize, got: usize },
}

fn check_lambda(config: &ChannelConfig, lambda: &[f64]) -> Result<(), BaselineError> {
    if lambda.len() != config.users {
        return Err(BaselineError::LambdaLength {
            expected: config.users,
            got: lambda.len(),
        });
    }
    Ok(())
}

/// `(sqrt(P) + sum_k b_k sqrt(lambda_k P))^2`, the coherent power of `x_0` at Rx 0.
fn coherent_power(config: &ChannelConfig, lambda: &[f64]) -> f64 {
    let p = config.power;
    let amp = p.sqrt()
        + config
            .cross
            .iter()
            .zip(lambda)
            .map(|(b, l)| b * (l * p).sqrt())
            .sum::<f64>();
    amp * amp
}

/// DPC tuple: Rx 0 treats the cognitive signals as noise, receiver `k` sees
/// none of `x_0`.
pub fn dpc_rates(config: &ChannelConfig, lambda: &[f64]) -> Result<RatePoint, BaselineError> {
    check_lambda(config, lambda)?;
    let p = config.power;
    let noise = 1.0
        + config
            .cross
            .iter()
            .zip(lambda)
            .map(|(b, l)| b * b * (1.0 - l) * p)
            .sum::<f64>();
    let mut rates = vec![capacity(coherent_power(config, lambda) / noise)];
    rates.extend(
        config
            .direct
            .iter()
            .zip(lambda)
            .map(|(h, l)| capacity((1.0 - l) * h * h * p)),
    );
    Ok(RatePoint::new(rates))
}

/// `sum_k coeffs[k] R_k <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn holds(&self, point: &RatePoint, tol: f64) -> bool {
        let lhs: f64 = self.coeffs.iter().zip(&point.rates).map(|(c, r)| c * r).sum();
        lhs <= self.bound + tol
    }
}

/// SND region as an intersection of half-spaces (plus nonnegativity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SndRegion {
    /// The `R_0` bound followed by one bound per nonempty subset `J`, in
    /// increasing bitmask order.
    pub receiver0: Vec<LinearConstraint>,
    /// `R_k <= 1/2 log2(1 + lbar h^2 P / (1 + lambda h^2 P))`.
    pub direct: Vec<LinearConstraint>,
}

impl SndRegion {
    pub fn constraints(&self) -> impl Iterator<Item = &LinearConstraint> {
        self.receiver0.iter().chain(&self.direct)
    }

    pub fn contains(&self, point: &RatePoint, tol: f64) -> bool {
        point.rates.iter().all(|&r| r >= -tol) && self.constraints().all(|c| c.holds(point, tol))
    }

    /// Largest `R_0` compatible with the given cognitive rates, or `None` if
    /// they violate a direct bound.
    pub fn max_primary(&self, cognitive: &[f64]) -> Option<f64> {
        for (c, r) in self.direct.iter().zip(cognitive) {
            if *r > c.bound + 1e-12 {
                return None;
            }
        }
        let r0 = self
            .receiver0
            .iter()
            .map(|c| {
                let rest: f64 = c.coeffs[1..].iter().zip(cognitive).map(|(a, r)| a * r).sum();
                c.bound - rest
            })
            .fold(f64::INFINITY, f64::min);
        Some(r0.max(0.0))
    }
}

pub fn snd_rates(config: &ChannelConfig, lambda: &[f64]) -> Result<SndRegion, BaselineError> {
    check_lambda(config, lambda)?;
    let k = config.users;
    if k > SND_MAX_USERS {
        return Err(BaselineError::TooManyUsers(k));
    }
    let p = config.power;
    let coherent = coherent_power(config, lambda);
    let unit = |idx: usize| {
        let mut c = vec![0.0; k + 1];
        c[idx] = 1.0;
        c
    };
    let mut receiver0 = vec![LinearConstraint {
        coeffs: unit(0),
        bound: capacity(coherent),
    }];
    for mask in 1u32..(1 << k) {
        let mut coeffs = unit(0);
        let mut power = coherent;
        for j in 0..k {
            if mask & (1 << j) != 0 {
                coeffs[j + 1] = 1.0;
                power += config.cross[j].powi(2) * (1.0 - lambda[j]) * p;
            }
        }
        receiver0.push(LinearConstraint {
            coeffs,
            bound: capacity(power),
        });
    }
    let direct = (0..k)
        .map(|j| {
            let g = config.direct[j].powi(2) * p;
            LinearConstraint {
                coeffs: unit(j + 1),
                bound: capacity((1.0 - lambda[j]) * g / (1.0 + lambda[j] * g)),
            }
        })
        .collect();
    Ok(SndRegion { receiver0, direct })
}

/// Largest `min(R_0, R_k)` of DPC over a power split shared by all users.
pub fn dpc_symmetric_rate(config: &ChannelConfig) -> f64 {
    let at = |l: f64| dpc_rates(config, &vec![l; config.users]).expect("one split per user");
    // R_0 grows with lambda while every R_k shrinks: bisect on the crossing.
    if at(0.0).primary() >= at(0.0).min_cognitive() {
        return at(0.0).symmetric();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        if p.primary() < p.min_cognitive() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo).symmetric().max(at(hi).symmetric())
}

/// Largest `r` with `(r, .., r)` inside the SND region, maximised over a
/// shared power split.
pub fn snd_symmetric_rate(config: &ChannelConfig) -> Result<f64, BaselineError> {
    let at = |l: f64| -> Result<f64, BaselineError> {
        let region = snd_rates(config, &vec![l; config.users])?;
        Ok(region
            .constraints()
            .map(|c| c.bound / c.coeffs.iter().sum::<f64>())
            .fold(f64::INFINITY, f64::min))
    };
    const SAMPLES: usize = 1001;
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..SAMPLES {
        let v = at(i as f64 / (SAMPLES - 1) as f64)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    // Golden-section refinement between the neighbouring samples.
    let step = 1.0 / (SAMPLES - 1) as f64;
    let (mut a, mut b) = (
        (best.1 as f64 - 1.0).max(0.0) * step,
        (best.1 as f64 + 1.0).min((SAMPLES - 1) as f64) * step,
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut value = best.0;
    for _ in 0..60 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        let (f1, f2) = (at(x1)?, at(x2)?);
        value = value.max(f1).max(f2);
        if f1 < f2 {
            a = x1;
        } else {
            b = x2;
        }
    }
    Ok(value)
}

/// `R_0 <= 1/2 log2(1 + P)`, `R_k <= 1/2 log2(1 + h_k^2 P)`.
pub fn trivial_bounds(config: &ChannelConfig) -> RatePoint {
    let mut rates = vec![capacity(config.power)];
    rates.extend(config.direct.iter().map(|h| capacity(h * h * config.power)));
    RatePoint::new(rates)
}

/// Transmit covariances of the two broadcast messages.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
}

/// Channels of the cooperative broadcast channel: `H1 = [1, b]` to Rx 0 and
/// `H2 = [0 | diag(h)]` to the pooled cognitive receivers.
fn bc_channels(config: &ChannelConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = config.users + 1;
    let mut h1 = DMatrix::zeros(1, n);
    h1[(0, 0)] = 1.0;
    for (k, b) in config.cross.iter().enumerate() {
        h1[(0, k + 1)] = *b;
    }
    let mut h2 = DMatrix::zeros(config.users, n);
    for (k, h) in config.direct.iter().enumerate() {
        h2[(k, k + 1)] = *h;
    }
    (h1, h2)
}

fn half_log2_det(m: &DMatrix<f64>) -> f64 {
    match m.clone().cholesky() {
        Some(c) => c.l().diagonal().iter().map(|d| d.log2()).sum(),
        None => 0.5 * m.determinant().max(f64::MIN_POSITIVE).log2(),
    }
}

fn gram(h: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    h * k * h.transpose() + DMatrix::identity(n, n)
}

/// `(R_0, sum_k R_k)` of both encoding orders for one covariance pair.
pub fn bc_rates(config: &ChannelConfig, pair: &CovariancePair) -> [(f64, f64); 2] {
    let (h1, h2) = bc_channels(config);
    let total = &pair.k1 + &pair.k2;
    let first = (
        half_log2_det(&gram(&h1, &total)) - half_log2_det(&gram(&h1, &pair.k2)),
        half_log2_det(&gram(&h2, &pair.k2)),
    );
    let second = (
        half_log2_det(&gram(&h1, &pair.k1)),
        half_log2_det(&gram(&h2, &total)) - half_log2_det(&gram(&h2, &pair.k1)),
    );
    [first, second]
}

/// Upper concave envelope of sampled broadcast rates in `(R_0, sum_k R_k / K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterEnvelope {
    /// Hull vertices with increasing `R_0` and nonincreasing average rate.
    pub vertices: Vec<(f64, f64)>,
    pub samples: usize,
    pub seed: u64,
}

impl OuterEnvelope {
    /// Assumes the points describe a convex, downward-closed region.
    pub fn from_points(points: &[(f64, f64)], samples: usize, seed: u64) -> Self {
        let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
        let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.push((0.0, y_max));
        pts.push((x_max, 0.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        // Drop the rising part left of the highest vertex.
        let top = hull
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        let mut vertices = vec![(0.0, hull.get(top).map_or(0.0, |v| v.1))];
        vertices.extend(hull.into_iter().skip(top).filter(|v| v.0 > 0.0));
        Self {
            vertices,
            samples,
            seed,
        }
    }

    pub fn max_primary(&self) -> f64 {
        self.vertices.last().map_or(0.0, |v| v.0)
    }

    /// Largest average cognitive rate on the envelope at `r0`; `None` past
    /// the largest primary rate.
    pub fn max_rbar_at(&self, r0: f64) -> Option<f64> {
        if r0 > self.max_primary() {
            return None;
        }
        let r0 = r0.max(0.0);
        for w in self.vertices.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if r0 <= x1 {
                if x1 - x0 <= f64::EPSILON {
                    return Some(y0.max(y1));
                }
                return Some(y0 + (y1 - y0) * (r0 - x0) / (x1 - x0));
            }
        }
        self.vertices.first().map(|v| v.1)
    }

    pub fn contains(&self, r0: f64, rbar: f64, tol: f64) -> bool {
        match self.max_rbar_at((r0 - tol).max(0.0)) {
            Some(y) => rbar <= y + tol,
            None => false,
        }
    }
}

/// Weighted sum-rate maximisation on the dual multiple-access channel:
/// maximises `w0 R_0 + w2 R_sum` over `q >= 0`, `Q >= 0`, `q + tr Q <= T`.
struct DualMac {
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
    budget: f64,
}

impl DualMac {
    fn covariances(&self, q: f64, big_q: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let s0 = self.h1.transpose() * &self.h1 * q;
        let s2 = self.h2.transpose() * big_q * &self.h2;
        (s0, s2)
    }

    /// Rates for successive decoding with the heavier-weighted user last.
    fn rates(&self, q: f64, big_q: &DMatrix<f64>, primary_last: bool) -> (f64, f64) {
        let n = self.h1.ncols();
        let id = DMatrix::<f64>::identity(n, n);
        let (s0, s2) = self.covariances(q, big_q);
        let all = half_log2_det(&(&id + &s0 + &s2));
        if primary_last {
            let r0 = half_log2_det(&(&id + &s0));
            (r0, all - r0)
        } else {
            let r2 = half_log2_det(&(&id + &s2));
            (all - r2, r2)
        }
    }

    fn objective(&self, q: f64, big_q: &DMatrix<f64>, w0: f64, w2: f64) -> f64 {
        let (r0, r2) = self.rates(q, big_q, w0 >= w2);
        w0 * r0 + w2 * r2
    }

    fn gradient(&self, q: f64, big_q: &DMatrix<f64>, w0: f64, w2: f64) -> (f64, DMatrix<f64>) {
        let n = self.h1.ncols();
        let id = DMatrix::<f64>::identity(n, n);
        let (s0, s2) = self.covariances(q, big_q);
        let inv_all = (&id + &s0 + &s2).try_inverse().unwrap_or_else(|| id.clone());
        let (lo, hi) = if w0 >= w2 { (w2, w0) } else { (w0, w2) };
        let mut gq = lo * (&self.h1 * &inv_all * self.h1.transpose())[(0, 0)];
        let mut g_big = &self.h2 * &inv_all * self.h2.transpose() * lo;
        if w0 >= w2 {
            let inv = (&id + &s0).try_inverse().unwrap_or_else(|| id.clone());
            gq += (hi - lo) * (&self.h1 * inv * self.h1.transpose())[(0, 0)];
        } else {
            let inv = (&id + &s2).try_inverse().unwrap_or_else(|| id.clone());
            g_big += &self.h2 * inv * self.h2.transpose() * (hi - lo);
        }
        (gq, g_big)
    }

    /// Euclidean projection onto `{q >= 0, Q >= 0, q + tr Q <= T}`.
    fn project(&self, q: f64, big_q: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let sym = (big_q + big_q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut x: Vec<f64> = std::iter::once(q).chain(eig.eigenvalues.iter().copied()).collect();
        project_capped_simplex(&mut x, self.budget);
        let lambda = DVector::from_row_slice(&x[1..]);
        let v = &eig.eigenvectors;
        (x[0], v * DMatrix::from_diagonal(&lambda) * v.transpose())
    }

    fn maximise(&self, w0: f64, w2: f64) -> (f64, f64) {
        let k = self.h2.nrows();
        let share = self.budget / (k + 1) as f64;
        let mut q = share;
        let mut big_q = DMatrix::identity(k, k) * share;
        let mut f = self.objective(q, &big_q, w0, w2);
        let mut step = self.budget;
        for _ in 0..400 {
            let (gq, g_big) = self.gradient(q, &big_q, w0, w2);
            let mut improved = false;
            while step > 1e-12 {
                let (nq, n_big) = self.project(q + step * gq, &(&big_q + &g_big * step));
                let nf = self.objective(nq, &n_big, w0, w2);
                if nf > f {
                    q = nq;
                    big_q = n_big;
                    improved = nf - f > 1e-13;
                    f = nf;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        self.rates(q, &big_q, w0 >= w2)
    }
}

/// Projects onto `{x >= 0, sum x <= t}`.
fn project_capped_simplex(x: &mut [f64], t: f64) {
    let clipped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped <= t {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        let cand = (acc - t) / (i + 1) as f64;
        if *v - cand > 0.0 {
            theta = cand;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

fn scale_to_budget(pair: &mut CovariancePair, budget: f64) {
    let tr = pair.k1.trace() + pair.k2.trace();
    if tr > 0.0 {
        pair.k1 *= budget / tr;
        pair.k2 *= budget / tr;
    }
}

/// One random covariance pair, refined by coordinate ascent on a random
/// weighting of `(R_0, sum_k R_k / K)`.
fn sample_pair(config: &ChannelConfig, rng: &mut ChaCha8Rng, budget: f64) -> Vec<(f64, f64)> {
    let n = config.users + 1;
    let kf = config.users as f64;
    let split: f64 = rng.random();
    let mut g1 = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * split.sqrt());
    let mut g2 = DMatrix::from_fn(n, n, |_, _| {
        rng.sample::<f64, _>(StandardNormal) * (1.0 - split).sqrt()
    });
    let w: f64 = rng.random();
    let build = |g1: &DMatrix<f64>, g2: &DMatrix<f64>| {
        let mut pair = CovariancePair {
            k1: g1 * g1.transpose(),
            k2: g2 * g2.transpose(),
        };
        scale_to_budget(&mut pair, budget);
        pair
    };
    let score = |pair: &CovariancePair| {
        bc_rates(config, pair)
            .iter()
            .map(|(r0, rs)| w * r0 + (1.0 - w) * rs / kf)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = score(&build(&g1, &g2));
    let mut step = 0.5;
    while step > 1e-3 {
        let mut moved = false;
        for which in 0..2 {
            for idx in 0..n * n {
                for dir in [step, -step] {
                    let g = if which == 0 { &mut g1 } else { &mut g2 };
                    g[idx] += dir;
                    let s = score(&build(&g1, &g2));
                    if s > best {
                        best = s;
                        moved = true;
                        break;
                    }
                    let g = if which == 0 { &mut g1 } else { &mut g2 };
                    g[idx] -= dir;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    bc_rates(config, &build(&g1, &g2))
        .iter()
        .map(|(r0, rs)| (*r0, rs / kf))
        .collect()
}

/// Number of weightings used for the dual multiple-access refinement.
const MAC_WEIGHTS: usize = 41;

/// Sampled broadcast-channel outer bound, projected onto
/// `(R_0, sum_k R_k / K)`. Sample `i` draws from stream `i` of a ChaCha
/// generator seeded with `seed`, so results are reproducible and adding
/// samples only adds points.
pub fn bc_outer_bound(config: &ChannelConfig, n_samples: usize, seed: u64) -> OuterEnvelope {
    let budget = (config.users + 1) as f64 * config.power;
    let kf = config.users as f64;
    let (h1, h2) = bc_channels(config);
    let mut points = Vec::new();

    // Beamforming towards one receiver only.
    let h1_sq = (&h1 * h1.transpose())[(0, 0)];
    points.push((capacity(budget * h1_sq), 0.0));
    let mac = DualMac { h1, h2, budget };
    for i in 0..MAC_WEIGHTS {
        let w = i as f64 / (MAC_WEIGHTS - 1) as f64;
        let (r0, rs) = mac.maximise(w, (1.0 - w) / kf);
        points.push((r0, rs / kf));
    }
    for i in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        points.extend(sample_pair(config, &mut rng, budget));
    }
    OuterEnvelope::from_points(&points, n_samples, seed)
}
