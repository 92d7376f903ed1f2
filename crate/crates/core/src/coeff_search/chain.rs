//! Depth-first search over ordered decoding chains.
//!
//! A row is appended only if it raises the exact rank of `A` and every user
//! in its support gets `r_k > 0`. A chain ends as soon as it lies in `A(L)`.
//! Candidate rows at each depth come from the ellipsoid `P a^T B_l a < sigma_k^2`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;

use super::enumerate::Ellipsoid;
use super::exact::{IntBasis, SpanReducer};
use super::quotient::Quotient;
use super::{row_order, CoeffMatrix, SearchBudget};
use crate::cf_rates::{
    assemble_with_direct, capacity, direct_rates, evaluate_row, scaled_row, scaling_matrix, ComputationResult,
    RateOptions, SideInfo, Theorem1Rates,
};
use crate::channel_model::{effective_channel, ChannelConfig, EffectiveChannel, SchemeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Receives every valid chain.
pub trait ChainVisitor {
    fn visit(&mut self, matrix: &CoeffMatrix, rates: &Theorem1Rates) -> Flow;

    /// Called before extending `prefix`; `ceiling[k]` bounds `R_k` for every
    /// completion. `None` skips the subtree. Otherwise entry `k` of the result
    /// is a rate that every further row involving user `k` must exceed.
    fn requirements(&mut self, _prefix: &[Vec<i64>], ceiling: &[f64]) -> Option<Vec<f64>> {
        Some(vec![f64::NEG_INFINITY; ceiling.len()])
    }

    /// Skip rows whose support strictly contains the support of another row
    /// that differs from it by a rational combination of the earlier rows.
    /// Such a pair shares its noise and its effect on later rows, and the
    /// smaller support constrains fewer users.
    fn minimal_supports(&self) -> bool {
        false
    }
}

impl<F> ChainVisitor for F
where
    F: FnMut(&CoeffMatrix, &Theorem1Rates) -> Flow,
{
    fn visit(&mut self, matrix: &CoeffMatrix, rates: &Theorem1Rates) -> Flow {
        self(matrix, rates)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOutcome {
    /// Valid, feasible chains handed to the visitor.
    pub chains: usize,
    /// Ran out of time before finishing.
    pub truncated: bool,
}

struct Dfs<'a, V: ?Sized> {
    eff: EffectiveChannel,
    params: &'a SchemeParams,
    power: f64,
    c: DMatrix<f64>,
    direct: Vec<f64>,
    /// `R_0 <= 1/2 log2(1 + b0^2 P)` for any scheme.
    primary_ceiling: f64,
    caps: Vec<f64>,
    a_max: i64,
    l_max: usize,
    opts: RateOptions,
    deadline: Option<Instant>,
    outcome: SearchOutcome,
    stopped: bool,
    visit: &'a mut V,
}

/// Walks every feasible minimal chain in `A(L)`, `L <= budget.l_max`, with
/// entries bounded by `budget.a_max`.
pub fn search_chains<V>(
    config: &ChannelConfig,
    params: &SchemeParams,
    budget: &SearchBudget,
    opts: &RateOptions,
    visit: &mut V,
) -> SearchOutcome
where
    V: ChainVisitor + ?Sized,
{
    let eff = effective_channel(config, params);
    let caps = eff.sigma_sq.iter().map(|s| s / config.power).collect();
    let mut dfs = Dfs {
        params,
        power: config.power,
        c: scaling_matrix(params),
        direct: direct_rates(config, params),
        primary_ceiling: capacity(eff.b0 * eff.b0 * config.power),
        caps,
        a_max: budget.a_max,
        l_max: budget.l_max.min(config.users + 1),
        opts: *opts,
        deadline: budget.deadline.map(|d| Instant::now() + d),
        outcome: SearchOutcome::default(),
        stopped: false,
        visit,
        eff,
    };
    let side = SideInfo::new(dfs.eff.h_eff.clone());
    let mut rows = Vec::new();
    let mut results = Vec::new();
    dfs.walk(&side, &IntBasis::default(), &IntBasis::default(), &mut rows, &mut results);
    dfs.outcome
}

impl<V> Dfs<'_, V>
where
    V: ChainVisitor + ?Sized,
{
    fn ceiling(&self, rows: &[Vec<i64>], results: &[ComputationResult]) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.direct.len() + 1);
        c.push(self.primary_ceiling);
        c.extend_from_slice(&self.direct);
        for (row, res) in rows.iter().zip(results) {
            for (k, &a) in row.iter().enumerate() {
                if a != 0 {
                    c[k] = c[k].min(res.rates[k]);
                }
            }
        }
        c
    }

    fn out_of_time(&mut self) -> bool {
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.outcome.truncated = true;
                self.stopped = true;
            }
        }
        self.stopped
    }

    fn walk(
        &mut self,
        side: &SideInfo,
        full: &IntBasis,
        tail: &IntBasis,
        rows: &mut Vec<Vec<i64>>,
        results: &mut Vec<ComputationResult>,
    ) {
        if self.out_of_time() {
            return;
        }
        let ceiling = self.ceiling(rows, results);
        let Some(need) = self.visit.requirements(rows, &ceiling) else {
            return;
        };
        let need: Vec<f64> = need.into_iter().map(|r| r.max(0.0)).collect();
        // r_k > need_k  <=>  P a^T B a < sigma_k^2 4^(-need_k)
        let caps: Vec<f64> = self
            .caps
            .iter()
            .zip(&need)
            .map(|(c, r)| c * (-2.0 * r).exp2())
            .collect();
        let b = &self.c * side.middle_matrix(self.power) * self.c.transpose();
        let b = (&b + b.transpose()) * 0.5;
        let mut candidates = if self.visit.minimal_supports() && !rows.is_empty() {
            self.minimal_candidates(&b, &caps, rows)
        } else {
            self.coset_candidates(&b, &caps, full)
        };
        // Low-noise rows first so good chains are found early.
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| row_order(&x.1, &y.1)));

        for (_, row) in candidates {
            if self.stopped {
                return;
            }
            let mut full_next = full.clone();
            if !full_next.insert(&row) {
                continue;
            }
            let res = evaluate_row(&self.eff, self.params, side, &row, self.power, &self.opts);
            let useful = row
                .iter()
                .zip(&res.rates)
                .zip(&need)
                .all(|((&a, &r), &n)| a == 0 || r > n);
            if !useful {
                continue;
            }
            let mut tail_next = tail.clone();
            tail_next.insert(&row[1..]);
            let valid = full_next.rank() == tail_next.rank() + 1;

            rows.push(row);
            results.push(res);
            if valid {
                let matrix = CoeffMatrix::from_rows(rows.clone());
                let rates = assemble_with_direct(&self.direct, &matrix, results.clone());
                self.outcome.chains += 1;
                if self.visit.visit(&matrix, &rates) == Flow::Stop {
                    self.stopped = true;
                }
            } else if rows.len() < self.l_max {
                let mut side_next = side.clone();
                side_next.push(&scaled_row(self.params, rows.last().unwrap()));
                self.walk(&side_next, &full_next, &tail_next, rows, results);
            }
            rows.pop();
            results.pop();
        }
    }

    /// Rows differing by an element of the decoded span share their noise
    /// and future, so only the smallest row per (coset, support) is kept.
    fn coset_candidates(&self, b: &DMatrix<f64>, caps: &[f64], full: &IntBasis) -> Vec<(f64, Vec<i64>)> {
        let Some(ellipsoid) = Ellipsoid::new(b, caps, self.a_max) else {
            return Vec::new();
        };
        let reducer = SpanReducer::new(full);
        let mut classes: HashMap<(u64, Vec<i128>), Vec<i64>> = HashMap::new();
        ellipsoid.for_each(|a| {
            let support = a
                .iter()
                .enumerate()
                .fold(0u64, |m, (k, &x)| if x != 0 { m | 1 << k } else { m });
            classes
                .entry((support, reducer.key(a)))
                .and_modify(|r| {
                    if row_order(a, r) == Ordering::Less {
                        *r = a.to_vec();
                    }
                })
                .or_insert_with(|| a.to_vec());
        });
        classes.into_values().map(|a| (quad(b, &a), a)).collect()
    }

    fn minimal_candidates(&self, b: &DMatrix<f64>, caps: &[f64], rows: &[Vec<i64>]) -> Vec<(f64, Vec<i64>)> {
        let q = Quotient::new(rows, caps.len());
        let top = caps.iter().copied().fold(0.0, f64::max);
        let g = q.class_form(b);
        let Some(ellipsoid) = Ellipsoid::new(&g, &vec![top; q.dim()], q.class_bound(self.a_max)) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        ellipsoid.for_each(|y| {
            let noise = quad(&g, y);
            let allowed = caps
                .iter()
                .enumerate()
                .fold(0u64, |m, (k, &c)| if noise < c * (1.0 + 1e-9) + 1e-12 { m | 1 << k } else { m });
            if allowed == 0 {
                return;
            }
            for a in q.minimal_members(&q.base(y), self.a_max, allowed) {
                out.push((quad(b, &a), a));
            }
        });
        out
    }
}

fn quad(b: &DMatrix<f64>, a: &[i64]) -> f64 {
    let n = a.len();
    let mut q = 0.0;
    for r in 0..n {
        if a[r] == 0 {
            continue;
        }
        let row: f64 = (0..n).map(|c| b[(r, c)] * a[c] as f64).sum();
        q += a[r] as f64 * row;
    }
    q
}
