//! Integer rows modulo the span of already chosen rows.
//!
//! Every row splits as `a = sum z_i v_i + sum y_j t_j` with `v` a basis of the
//! saturated span and `y = K a` the class of `a`. The noise of `a` depends on
//! `y` only, so the classes are enumerated first and each class is then
//! searched for members with as few nonzero entries as possible.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use super::exact::{echelon, LeftSolver};
use super::row_order;

#[derive(Debug, Clone)]
pub(crate) struct Quotient {
    n: usize,
    /// Rows `k_j` with `y_j = k_j . a`.
    k: Vec<Vec<i128>>,
    t: Vec<Vec<i128>>,
    v: Vec<Vec<i128>>,
    /// Zero patterns, largest first.
    plans: Vec<ZeroPlan>,
}

/// Members of a class vanishing on `zeros` are `a1 + w dirs` with `a1` from
/// `solver`; `dirs` is in echelon form.
#[derive(Debug, Clone)]
struct ZeroPlan {
    zeros: u64,
    cols: Vec<usize>,
    solver: LeftSolver,
    dirs: Vec<Vec<i128>>,
    pivots: Vec<usize>,
}

impl Quotient {
    /// `prev` must be linearly independent.
    pub(crate) fn new(prev: &[Vec<i64>], n: usize) -> Self {
        let m = prev.len();
        let rt: Vec<Vec<i128>> = (0..n).map(|c| prev.iter().map(|r| r[c] as i128).collect()).collect();
        let ech = echelon(&rt, m);
        debug_assert_eq!(ech.pivots.len(), m);
        let mut zero_sets: Vec<u64> = (0..(1u64 << n) - 1).collect();
        zero_sets.sort_by_key(|z| (std::cmp::Reverse(z.count_ones()), *z));
        let column = |i: usize| -> Vec<i128> { ech.q_inv.iter().map(|r| r[i]).collect() };
        let v: Vec<Vec<i128>> = (0..m).map(column).collect();
        let plans = zero_sets
            .into_iter()
            .map(|zeros| {
                let cols: Vec<usize> = (0..n).filter(|&c| zeros >> c & 1 == 1).collect();
                let vz: Vec<Vec<i128>> = v.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
                let solver = LeftSolver::new(&vz, cols.len());
                let dirs: Vec<Vec<i128>> = solver.kernel().iter().map(|w| combine(&vec![0; n], w, &v)).collect();
                let d = echelon(&dirs, n);
                ZeroPlan { zeros, cols, solver, dirs: d.e, pivots: d.pivots }
            })
            .collect();
        Self {
            n,
            k: ech.q[m..].to_vec(),
            t: (m..n).map(column).collect(),
            v,
            plans,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.t.len()
    }

    /// `G = T B T^T`, the form on class coordinates.
    pub(crate) fn class_form(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let bt: Vec<Vec<f64>> = self
            .t
            .iter()
            .map(|t| (0..self.n).map(|r| (0..self.n).map(|c| b[(r, c)] * t[c] as f64).sum()).collect())
            .collect();
        DMatrix::from_fn(d, d, |i, j| {
            let g: f64 = self.t[i].iter().zip(&bt[j]).map(|(&x, y)| x as f64 * y).sum();
            g
        })
    }

    /// Largest class coordinate of any row inside the box.
    pub(crate) fn class_bound(&self, a_max: i64) -> i64 {
        let l1 = self.k.iter().map(|k| k.iter().map(|x| x.abs()).sum::<i128>()).max().unwrap_or(0);
        (l1 * a_max as i128).min(i64::MAX as i128) as i64
    }

    /// The member `sum y_j t_j` of class `y`.
    pub(crate) fn base(&self, y: &[i64]) -> Vec<i128> {
        let mut a = vec![0i128; self.n];
        for (&yj, t) in y.iter().zip(&self.t) {
            for (x, &tc) in a.iter_mut().zip(t) {
                *x += yj as i128 * tc;
            }
        }
        a
    }

    /// For each inclusion-minimal support realised by a member of the class of
    /// `base` inside the box, the smallest such member under `row_order` after
    /// fixing the sign of its first nonzero entry. Supports are restricted to
    /// the bit set `allowed`.
    pub(crate) fn minimal_members(&self, base: &[i128], a_max: i64, allowed: u64) -> Vec<Vec<i64>> {
        let forced = !allowed & ((1u64 << self.n) - 1);
        let mut realised: Vec<u64> = Vec::new();
        let mut out = Vec::new();
        for plan in &self.plans {
            let zeros = plan.zeros;
            if zeros & forced != forced || realised.iter().any(|&r| r & zeros == zeros) {
                continue;
            }
            if let Some(best) = self.best_with_zeros(base, plan, a_max) {
                realised.push(zeros);
                out.push(best);
            }
        }
        out
    }

    fn best_with_zeros(&self, base: &[i128], plan: &ZeroPlan, a_max: i64) -> Option<Vec<i64>> {
        let zeros = plan.zeros;
        let rhs: Vec<i128> = plan.cols.iter().map(|&c| -base[c]).collect();
        let z = plan.solver.solve(&rhs)?;
        let a1 = combine(base, &z, &self.v);
        let mut best: Option<Vec<i64>> = None;
        let mut offer = |a: &[i128]| {
            if a.iter().enumerate().any(|(c, &x)| (x == 0) != (zeros >> c & 1 == 1)) {
                return;
            }
            let sign = a.iter().find(|&&x| x != 0).map_or(1, |x| x.signum());
            let a: Vec<i64> = a.iter().map(|&x| (sign * x) as i64).collect();
            if best.as_ref().is_none_or(|b| row_order(&a, b) == Ordering::Less) {
                best = Some(a);
            }
        };
        boxed_points(&a1, &plan.dirs, &plan.pivots, a_max as i128, &mut offer);
        best
    }
}

fn combine(start: &[i128], coeffs: &[i128], rows: &[Vec<i128>]) -> Vec<i128> {
    let mut a = start.to_vec();
    for (&w, r) in coeffs.iter().zip(rows) {
        if w != 0 {
            for (x, &rc) in a.iter_mut().zip(r) {
                *x += w * rc;
            }
        }
    }
    a
}

/// Every `a1 + w e` inside the box `|a_c| <= a_max`, for `e` in echelon form
/// with independent rows.
fn boxed_points(a1: &[i128], e: &[Vec<i128>], pivots: &[usize], a_max: i128, offer: &mut impl FnMut(&[i128])) {
    fn go(
        level: usize,
        a: &mut Vec<i128>,
        e: &[Vec<i128>],
        pivots: &[usize],
        a_max: i128,
        offer: &mut impl FnMut(&[i128]),
    ) {
        if level == pivots.len() {
            if a.iter().all(|x| x.abs() <= a_max) {
                offer(a);
            }
            return;
        }
        let p = pivots[level];
        let d = e[level][p];
        // a[p] + w d within [-a_max, a_max]
        let (lo, hi) = if d > 0 {
            (div_ceil(-a_max - a[p], d), div_floor(a_max - a[p], d))
        } else {
            (div_ceil(a_max - a[p], d), div_floor(-a_max - a[p], d))
        };
        for w in lo..=hi {
            for (x, &ec) in a.iter_mut().zip(&e[level]) {
                *x += w * ec;
            }
            go(level + 1, a, e, pivots, a_max, offer);
            for (x, &ec) in a.iter_mut().zip(&e[level]) {
                *x -= w * ec;
            }
        }
    }
    let mut a = a1.to_vec();
    go(0, &mut a, e, pivots, a_max, offer);
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_search::exact::SpanReducer;
    use crate::coeff_search::exact::IntBasis;
    use std::collections::HashMap;

    fn support(a: &[i64]) -> u64 {
        a.iter().enumerate().fold(0, |m, (k, &x)| if x != 0 { m | 1 << k } else { m })
    }

    fn boxed(n: usize, a_max: i64) -> Vec<Vec<i64>> {
        let side = (2 * a_max + 1) as usize;
        (0..side.pow(n as u32))
            .map(|mut i| {
                (0..n)
                    .map(|_| {
                        let x = (i % side) as i64 - a_max;
                        i /= side;
                        x
                    })
                    .collect()
            })
            .collect()
    }

    /// Brute force over the box: per class, the minimal supports and their
    /// smallest normalised members.
    fn oracle(prev: &[Vec<i64>], n: usize, a_max: i64) -> HashMap<Vec<i128>, Vec<Vec<i64>>> {
        let mut basis = IntBasis::default();
        prev.iter().for_each(|r| {
            basis.insert(r);
        });
        let reducer = SpanReducer::new(&basis);
        let mut by_class: HashMap<Vec<i128>, HashMap<u64, Vec<i64>>> = HashMap::new();
        for a in boxed(n, a_max) {
            let Some(first) = a.iter().find(|&&x| x != 0) else { continue };
            let a: Vec<i64> = a.iter().map(|x| x * first.signum()).collect();
            let key = reducer.key(&a);
            if key.iter().all(|&x| x == 0) {
                continue;
            }
            let neg: Vec<i128> = key.iter().map(|x| -x).collect();
            let key = key.max(neg);
            by_class
                .entry(key)
                .or_default()
                .entry(support(&a))
                .and_modify(|b| {
                    if row_order(&a, b) == Ordering::Less {
                        *b = a.clone();
                    }
                })
                .or_insert(a);
        }
        by_class
            .into_iter()
            .map(|(key, sets)| {
                let masks: Vec<u64> = sets.keys().copied().collect();
                let mut minimal: Vec<Vec<i64>> = sets
                    .into_iter()
                    .filter(|(s, _)| !masks.iter().any(|&o| o != *s && o & s == o))
                    .map(|(_, a)| a)
                    .collect();
                minimal.sort();
                (key, minimal)
            })
            .collect()
    }

    fn check(prev: Vec<Vec<i64>>, n: usize, a_max: i64) {
        let want = oracle(&prev, n, a_max);
        let q = Quotient::new(&prev, n);
        let mut basis = IntBasis::default();
        prev.iter().for_each(|r| {
            basis.insert(r);
        });
        let reducer = SpanReducer::new(&basis);
        let mut got: HashMap<Vec<i128>, Vec<Vec<i64>>> = HashMap::new();
        let bound = q.class_bound(a_max);
        let side = (2 * bound + 1) as usize;
        for i in 0..side.pow(q.dim() as u32) {
            let mut i = i;
            let y: Vec<i64> = (0..q.dim())
                .map(|_| {
                    let x = (i % side) as i64 - bound;
                    i /= side;
                    x
                })
                .collect();
            if y.iter().find(|&&x| x != 0).is_none_or(|&x| x < 0) {
                continue;
            }
            let mut members = q.minimal_members(&q.base(&y), a_max, u64::MAX);
            if members.is_empty() {
                continue;
            }
            members.sort();
            let key = reducer.key(&members[0]);
            let neg: Vec<i128> = key.iter().map(|x| -x).collect();
            assert!(got.insert(key.max(neg), members).is_none());
        }
        assert_eq!(got, want);
    }

    #[test]
    fn matches_brute_force_after_one_row() {
        check(vec![vec![1, 1, 1]], 3, 2);
        check(vec![vec![0, 2, 1]], 3, 2);
    }

    #[test]
    fn matches_brute_force_after_two_rows() {
        check(vec![vec![1, 2, 0, 1], vec![0, 1, 1, 1]], 4, 2);
        check(vec![vec![2, 0, 2, 0], vec![0, 3, 0, 1]], 4, 2);
    }

    #[test]
    fn restricted_supports() {
        let q = Quotient::new(&[vec![1, 1, 1]], 3);
        let members = q.minimal_members(&[1, 0, 0], 2, 0b110);
        assert_eq!(members, vec![vec![0, 1, 1]]);
        assert!(q.minimal_members(&[1, 0, 0], 2, 0b100).is_empty());
    }

    #[test]
    fn no_previous_rows() {
        check(Vec::new(), 3, 1);
    }
}
