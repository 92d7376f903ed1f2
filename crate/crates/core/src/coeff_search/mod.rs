//! Coefficient matrices `A` in `A(L)` and the search for the best one.

mod chain;
mod enumerate;
pub mod exact;
mod quotient;

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cf_rates::{theorem1_rates, RateOptions, Theorem1Rates};
use crate::channel_model::{effective_channel, ChannelConfig, RatePoint, SchemeParams};

pub use chain::{search_chains, ChainVisitor, Flow, SearchOutcome};
pub use exact::T0Certificate;

/// Relative tolerance under which two objective values count as tied.
pub const SCORE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("no feasible coefficient matrix within the search budget")]
    Empty,
}

/// `L x (K + 1)` integer matrix; row `l` holds `a(l) = (a_0(l), .., a_K(l))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoeffMatrix {
    rows: Vec<Vec<i64>>,
}

impl CoeffMatrix {
    /// Panics on ragged or empty rows.
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Self {
        if let Some(first) = rows.first() {
            assert!(!first.is_empty(), "empty coefficient row");
            assert!(
                rows.iter().all(|r| r.len() == first.len()),
                "ragged coefficient matrix"
            );
        }
        Self { rows }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, l: usize) -> &[i64] {
        &self.rows[l]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn into_rows(self) -> Vec<Vec<i64>> {
        self.rows
    }

    /// Row-major entries.
    pub fn flattened(&self) -> Vec<i64> {
        self.rows.concat()
    }

    /// Sums that involve user `k` (0-based rows).
    pub fn involving(&self, k: usize) -> Vec<usize> {
        (0..self.rows()).filter(|&l| self.rows[l][k] != 0).collect()
    }

    /// Ordering used to break ties: fewer rows first, then entries in
    /// row-major order (see [`row_order`]).
    pub fn tie_order(&self, other: &Self) -> Ordering {
        self.rows()
            .cmp(&other.rows())
            .then_with(|| row_order(&self.flattened(), &other.flattened()))
    }

    fn slices(&self) -> Vec<&[i64]> {
        self.row_iter().collect()
    }

    fn tails(&self) -> Vec<&[i64]> {
        self.row_iter().map(|r| &r[1..]).collect()
    }
}

impl std::fmt::Display for CoeffMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                let items: Vec<String> = r.iter().map(i64::to_string).collect();
                format!("[{}]", items.join(","))
            })
            .collect();
        write!(f, "[{}]", rows.join(","))
    }
}

/// Lexicographic order on integer vectors with entries ranked
/// `0 < 1 < -1 < 2 < -2 < ..`, so small coefficients come first.
pub fn row_order(a: &[i64], b: &[i64]) -> Ordering {
    let key = |x: &i64| (x.unsigned_abs(), *x < 0);
    a.iter().map(key).cmp(b.iter().map(key))
}

/// `A` is in `A(L)` iff `rank(A) = rank(A') + 1`, with `A'` the matrix
/// without its first column. Ranks are exact, over the rationals.
pub fn is_valid(matrix: &CoeffMatrix) -> bool {
    if matrix.rows() == 0 || matrix.cols() < 2 {
        return false;
    }
    exact::rank(&matrix.slices()) == exact::rank(&matrix.tails()) + 1
}

/// Integer row combination of `A` equal to `(value, 0, .., 0)`, `value > 0`.
/// `None` exactly when `A` is not valid.
pub fn solve_for_t0_index(matrix: &CoeffMatrix) -> Option<T0Certificate> {
    if !is_valid(matrix) {
        return None;
    }
    exact::t0_certificate(&matrix.slices())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    /// Entries are restricted to `[-a_max, a_max]`.
    pub a_max: i64,
    /// Maximum number of decoded sums.
    pub l_max: usize,
    pub deadline: Option<Duration>,
}

impl SearchBudget {
    pub fn new(a_max: i64, l_max: usize) -> Self {
        Self {
            a_max,
            l_max,
            deadline: None,
        }
    }

    /// Default bound with `L_max = K + 1`.
    pub fn for_channel(config: &ChannelConfig, params: &SchemeParams) -> Self {
        Self::new(default_a_max(config, params), config.users + 1)
    }
}

/// `ceil(sqrt(1 + P |h_eff|^2))`: rows with larger scaled norm have zero rate.
pub fn default_a_max(config: &ChannelConfig, params: &SchemeParams) -> i64 {
    let eff = effective_channel(config, params);
    let norm_sq: f64 = eff.h_eff.iter().map(|x| x * x).sum();
    (1.0 + config.power * norm_sq).sqrt().ceil() as i64
}

/// Nonzero rows with entries in `[-a_max, a_max]` whose first nonzero entry is positive.
fn canonical_rows(cols: usize, a_max: i64) -> Vec<Vec<i64>> {
    if a_max < 1 {
        return Vec::new();
    }
    let side = (2 * a_max + 1) as usize;
    let mut out = Vec::new();
    for idx in 0..side.pow(cols as u32) {
        let mut row = vec![0i64; cols];
        let mut t = idx;
        for x in row.iter_mut().rev() {
            *x = (t % side) as i64 - a_max;
            t /= side;
        }
        if row.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0) {
            out.push(row);
        }
    }
    out
}

/// Stream of every valid matrix with `L <= l_max` rows drawn from the
/// canonical rows, in increasing `L`. Row order is kept; row signs are not.
pub struct ValidMatrices {
    pool: Vec<Vec<i64>>,
    l_max: usize,
    idx: Vec<usize>,
    deadline: Option<Instant>,
    truncated: bool,
    done: bool,
}

impl ValidMatrices {
    /// Set when the deadline cut the stream short.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    fn advance(&mut self) {
        let n = self.pool.len();
        for slot in self.idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                return;
            }
            *slot = 0;
        }
        if self.idx.len() < self.l_max {
            self.idx = vec![0; self.idx.len() + 1];
        } else {
            self.done = true;
        }
    }
}

impl Iterator for ValidMatrices {
    type Item = CoeffMatrix;

    fn next(&mut self) -> Option<CoeffMatrix> {
        while !self.done {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                self.truncated = true;
                self.done = true;
                break;
            }
            let m = CoeffMatrix::from_rows(self.idx.iter().map(|&i| self.pool[i].clone()).collect());
            self.advance();
            if is_valid(&m) {
                return Some(m);
            }
        }
        None
    }
}

pub fn enumerate_valid(users: usize, budget: &SearchBudget) -> ValidMatrices {
    let pool = canonical_rows(users + 1, budget.a_max);
    let done = pool.is_empty() || budget.l_max == 0;
    ValidMatrices {
        pool,
        l_max: budget.l_max,
        idx: vec![0],
        deadline: budget.deadline.map(|d| Instant::now() + d),
        truncated: false,
        done,
    }
}

/// `A_1 = e_0`, `A_2 = [[c0, c, .., c], [0, 1, .., 1]]` and
/// `A_3 = [[c0, c, .., c], [1, 0, .., 0]]` for `|c0| <= c_max`, `1 <= c <= c_max`.
/// Some members (e.g. `A_2` with `c0 = 0`) are not valid.
pub fn symmetric_candidates(users: usize, c_max: i64) -> Vec<CoeffMatrix> {
    let mut e0 = vec![0i64; users + 1];
    e0[0] = 1;
    let ones: Vec<i64> = std::iter::once(0).chain(std::iter::repeat_n(1, users)).collect();
    let mut out = vec![CoeffMatrix::from_rows(vec![e0.clone()])];
    for second in [&ones, &e0] {
        for c0 in -c_max..=c_max {
            for c in 1..=c_max {
                let first: Vec<i64> = std::iter::once(c0).chain(std::iter::repeat_n(c, users)).collect();
                out.push(CoeffMatrix::from_rows(vec![first, second.clone()]));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    MaxPrimary,
    MaxSum,
    MaxSymmetric,
    /// `sum_k w_k R_k`.
    Weighted(Vec<f64>),
}

impl Objective {
    pub fn score(&self, point: &RatePoint) -> f64 {
        self.score_rates(&point.rates)
    }

    pub fn score_rates(&self, rates: &[f64]) -> f64 {
        match self {
            Objective::MaxPrimary => rates[0],
            Objective::MaxSum => rates.iter().sum(),
            Objective::MaxSymmetric => rates.iter().copied().fold(f64::INFINITY, f64::min),
            Objective::Weighted(w) => w.iter().zip(rates).map(|(w, r)| w * r).sum(),
        }
    }

    /// Smallest `R_k` that still allows a score of `target` when every other
    /// rate sits at its ceiling.
    pub fn required_rates(&self, target: f64, ceiling: &[f64]) -> Vec<f64> {
        let n = ceiling.len();
        match self {
            Objective::MaxPrimary => {
                let mut need = vec![f64::NEG_INFINITY; n];
                need[0] = target;
                need
            }
            Objective::MaxSymmetric => vec![target; n],
            Objective::MaxSum => {
                let total: f64 = ceiling.iter().sum();
                ceiling.iter().map(|c| target - (total - c)).collect()
            }
            Objective::Weighted(w) => {
                let total: f64 = w.iter().zip(ceiling).map(|(w, c)| w * c).sum();
                w.iter()
                    .zip(ceiling)
                    .map(|(&w, c)| {
                        if w > 0.0 {
                            (target - (total - w * c)) / w
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            }
        }
    }

    /// Nondecreasing in every rate, so rate ceilings give score ceilings.
    pub fn is_monotone(&self) -> bool {
        match self {
            Objective::Weighted(w) => w.iter().all(|&x| x >= 0.0),
            _ => true,
        }
    }
}

struct BestVisitor<'a> {
    objective: &'a Objective,
    best: BestTracker,
}

impl ChainVisitor for BestVisitor<'_> {
    fn visit(&mut self, matrix: &CoeffMatrix, rates: &Theorem1Rates) -> Flow {
        if rates.is_feasible() {
            self.best.offer(self.objective.score(&rates.point), matrix, rates);
        }
        Flow::Continue
    }

    fn requirements(&mut self, prefix: &[Vec<i64>], ceiling: &[f64]) -> Option<Vec<f64>> {
        let free = vec![f64::NEG_INFINITY; ceiling.len()];
        if !self.objective.is_monotone() {
            return Some(free);
        }
        if !self.best.may_improve(self.objective.score_rates(ceiling), prefix) {
            return None;
        }
        match self.best.score() {
            Some(s) => {
                let target = s - SCORE_TIE_TOL * s.abs().max(1.0);
                Some(self.objective.required_rates(target, ceiling))
            }
            None => Some(free),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestMatrix {
    pub matrix: CoeffMatrix,
    pub rates: Theorem1Rates,
    pub score: f64,
    /// The search hit its deadline; the result is the best seen so far.
    pub truncated: bool,
}

/// Order-independent reduction: highest score, ties to the smallest `(L, entries)`.
#[derive(Debug, Default)]
pub struct BestTracker {
    best: Option<(f64, CoeffMatrix, Theorem1Rates)>,
}

impl BestTracker {
    pub fn offer(&mut self, score: f64, matrix: &CoeffMatrix, rates: &Theorem1Rates) {
        let better = match &self.best {
            None => true,
            Some((s, m, _)) => {
                let tol = SCORE_TIE_TOL * s.abs().max(1.0);
                score > s + tol || (score >= s - tol && matrix.tie_order(m) == Ordering::Less)
            }
        };
        if better {
            self.best = Some((score, matrix.clone(), rates.clone()));
        }
    }

    pub fn score(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    /// Whether some completion of `prefix` scoring at most `bound` could
    /// still replace the current best.
    pub fn may_improve(&self, bound: f64, prefix: &[Vec<i64>]) -> bool {
        match &self.best {
            None => true,
            Some((s, m, _)) => {
                let tol = SCORE_TIE_TOL * s.abs().max(1.0);
                bound > s + tol || (bound >= s - tol && m.rows() > prefix.len())
            }
        }
    }

    pub fn finish(self, truncated: bool) -> Result<BestMatrix, SearchError> {
        let (score, matrix, rates) = self.best.ok_or(SearchError::Empty)?;
        Ok(BestMatrix {
            matrix,
            rates,
            score,
            truncated,
        })
    }
}

/// Best feasible matrix over all minimal decoding chains within `budget`.
pub fn best_matrix(
    config: &ChannelConfig,
    params: &SchemeParams,
    budget: &SearchBudget,
    objective: &Objective,
    opts: &RateOptions,
) -> Result<BestMatrix, SearchError> {
    let mut visitor = BestVisitor {
        objective,
        best: BestTracker::default(),
    };
    let outcome = search_chains(config, params, budget, opts, &mut visitor);
    visitor.best.finish(outcome.truncated)
}

/// Best feasible matrix among [`symmetric_candidates`].
pub fn best_symmetric_matrix(
    config: &ChannelConfig,
    params: &SchemeParams,
    c_max: i64,
    objective: &Objective,
    opts: &RateOptions,
) -> Result<BestMatrix, SearchError> {
    let mut best = BestTracker::default();
    for m in symmetric_candidates(config.users, c_max) {
        if let Ok(r) = theorem1_rates(config, params, &m, opts) {
            if r.is_feasible() {
                best.offer(objective.score(&r.point), &m, &r);
            }
        }
    }
    best.finish(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> CoeffMatrix {
        CoeffMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    fn apply(cert: &T0Certificate, a: &CoeffMatrix) -> Vec<i64> {
        let mut out = vec![0; a.cols()];
        for (c, row) in cert.coeffs.iter().zip(a.row_iter()) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += c * x;
            }
        }
        out
    }

    #[test]
    fn validity_examples() {
        assert!(is_valid(&m(&[&[1, 0, 0, 0]])));
        assert!(!is_valid(&m(&[&[0, 1, 0, 0]])));
        assert!(is_valid(&m(&[&[0, 1, 1, 1], &[1, 0, 0, 0]])));
        assert!(is_valid(&m(&[&[1, 2, 2, 2], &[0, 1, 1, 1]])));
        assert!(!is_valid(&m(&[&[0, 1, 1], &[0, 1, 1]])));
        assert!(!is_valid(&m(&[&[2, 1, 1], &[4, 2, 2]])));
    }

    #[test]
    fn certificates() {
        let a = m(&[&[0, 1, 1, 1], &[1, 0, 0, 0]]);
        let c = solve_for_t0_index(&a).unwrap();
        assert_eq!(c.coeffs, vec![0, 1]);
        assert_eq!(apply(&c, &a), vec![c.value, 0, 0, 0]);

        let a = m(&[&[1, 2, 2], &[0, 1, 1]]);
        let c = solve_for_t0_index(&a).unwrap();
        assert_eq!(c.coeffs, vec![1, -2]);
        assert_eq!(apply(&c, &a), vec![1, 0, 0]);

        assert!(solve_for_t0_index(&m(&[&[0, 1, 0]])).is_none());
    }

    #[test]
    fn single_user_unit_budget() {
        let all: Vec<_> = enumerate_valid(1, &SearchBudget::new(1, 1)).collect();
        assert_eq!(all, vec![m(&[&[1, 0]])]);
    }

    #[test]
    fn zero_budget_is_empty() {
        assert_eq!(enumerate_valid(3, &SearchBudget::new(0, 4)).count(), 0);
    }

    #[test]
    fn symmetric_candidate_counts() {
        assert_eq!(symmetric_candidates(3, 0), vec![m(&[&[1, 0, 0, 0]])]);
        let c = symmetric_candidates(3, 1);
        assert_eq!(c.len(), 1 + 3 + 3);
        assert!(c.contains(&m(&[&[-1, 1, 1, 1], &[0, 1, 1, 1]])));
        assert!(c.contains(&m(&[&[0, 1, 1, 1], &[0, 1, 1, 1]])));
        assert!(c.contains(&m(&[&[0, 1, 1, 1], &[1, 0, 0, 0]])));
    }

    #[test]
    fn tie_breaks_on_shape_then_entries() {
        let short = m(&[&[1, 0]]);
        let long = m(&[&[0, 1], &[1, 0]]);
        assert_eq!(short.tie_order(&long), Ordering::Less);
        let r = theorem1_rates(
            &ChannelConfig::new(1.0, vec![0.0], vec![1.0]),
            &SchemeParams::plain(1),
            &short,
            &RateOptions::default(),
        )
        .unwrap();
        let mut t = BestTracker::default();
        t.offer(1.0, &long, &r);
        t.offer(1.0, &short, &r);
        t.offer(1.0 - 1e-15, &long, &r);
        assert_eq!(t.finish(false).unwrap().matrix, short);
    }

    #[test]
    fn no_interference_picks_unit_row() {
        let cfg = ChannelConfig::new(10.0, vec![0.0], vec![1.0]);
        let p = SchemeParams::plain(1);
        let best = best_matrix(
            &cfg,
            &p,
            &SearchBudget::for_channel(&cfg, &p),
            &Objective::MaxSum,
            &RateOptions::default(),
        )
        .unwrap();
        assert_eq!(best.matrix, m(&[&[1, 0]]));
    }
}
