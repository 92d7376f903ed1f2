//! Fincke-Pohst enumeration of integer vectors inside an ellipsoid `a^T B a < t`.
//!
//! `B` is only positive semi-definite, so the walk runs on `B + eps I`: inside
//! the box `|a_i| <= a_max` this form exceeds `a^T B a` by at most
//! `eps n a_max^2`, which is added to every radius. The enumeration therefore
//! returns a superset; callers filter with the exact form.
//!
//! The radius may depend on which coordinates are nonzero: every coordinate
//! `i` carries its own cap `caps[i]`, and once `a_i != 0` the radius shrinks to
//! `min(radius, caps[i])`.

use nalgebra::{Cholesky, DMatrix};

pub(crate) struct Ellipsoid {
    /// Upper-triangular factor with `R^T R = B + eps I`.
    r: DMatrix<f64>,
    caps: Vec<f64>,
    radius: f64,
    a_max: i64,
}

impl Ellipsoid {
    /// `None` when every cap is nonpositive (no vector can qualify).
    pub(crate) fn new(b: &DMatrix<f64>, caps: &[f64], a_max: i64) -> Option<Self> {
        let n = b.nrows();
        let top = caps.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 || a_max < 1 {
            return None;
        }
        let box_sq = n as f64 * (a_max * a_max) as f64;
        let mut eps = 1e-7 * top / box_sq;
        let chol = loop {
            let g = b + DMatrix::identity(n, n) * eps;
            if let Some(c) = Cholesky::new(g) {
                break c;
            }
            eps *= 10.0;
        };
        let slack = eps * box_sq + 1e-9 * top;
        Some(Self {
            r: chol.l().transpose(),
            caps: caps.iter().map(|c| c + slack).collect(),
            radius: top + slack,
            a_max,
        })
    }

    /// Calls `visit` for every nonzero candidate whose first nonzero entry is positive.
    pub(crate) fn for_each(&self, mut visit: impl FnMut(&[i64])) {
        let n = self.r.nrows();
        let mut a = vec![0i64; n];
        self.descend(n, 0.0, self.radius, &mut a, &mut visit);
    }

    fn descend(
        &self,
        level: usize,
        used: f64,
        radius: f64,
        a: &mut [i64],
        visit: &mut impl FnMut(&[i64]),
    ) {
        if level == 0 {
            if let Some(first) = a.iter().find(|&&x| x != 0) {
                if *first > 0 {
                    visit(a);
                }
            }
            return;
        }
        let i = level - 1;
        let n = a.len();
        let rii = self.r[(i, i)];
        let offset: f64 = (i + 1..n).map(|j| self.r[(i, j)] * a[j] as f64).sum();
        let centre = -offset / rii;

        let span = |rad: f64| -> Option<(i64, i64)> {
            let rem = rad - used;
            if rem < 0.0 {
                return None;
            }
            let w = rem.sqrt() / rii.abs();
            let lo = ((centre - w).ceil() as i64).max(-self.a_max);
            let hi = ((centre + w).floor() as i64).min(self.a_max);
            (lo <= hi).then_some((lo, hi))
        };

        // Zero keeps the current radius; nonzero values tighten it.
        if used + offset * offset <= radius {
            a[i] = 0;
            self.descend(level - 1, used + offset * offset, radius, a, visit);
        }
        let tight = radius.min(self.caps[i]);
        if let Some((lo, hi)) = span(tight) {
            for v in lo..=hi {
                if v == 0 {
                    continue;
                }
                let t = rii * v as f64 + offset;
                let next = used + t * t;
                if next <= tight {
                    a[i] = v;
                    self.descend(level - 1, next, tight, a, visit);
                }
            }
        }
        a[i] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(b: &DMatrix<f64>, caps: &[f64], a_max: i64) -> Vec<Vec<i64>> {
        let n = b.nrows();
        let mut out = Vec::new();
        let side = (2 * a_max + 1) as usize;
        for idx in 0..side.pow(n as u32) {
            let mut a = vec![0i64; n];
            let mut t = idx;
            for x in a.iter_mut() {
                *x = (t % side) as i64 - a_max;
                t /= side;
            }
            let Some(first) = a.iter().find(|&&x| x != 0) else { continue };
            if *first < 0 {
                continue;
            }
            let mut q = 0.0;
            for r in 0..n {
                for c in 0..n {
                    q += a[r] as f64 * b[(r, c)] * a[c] as f64;
                }
            }
            let cap = (0..n)
                .filter(|&k| a[k] != 0)
                .map(|k| caps[k])
                .fold(f64::INFINITY, f64::min);
            if q < cap {
                out.push(a);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn superset_of_brute_force_on_singular_form() {
        // Rank-one plus a small diagonal, with one exactly null direction.
        let v = [1.0, 2.5, -0.7];
        let mut b = DMatrix::zeros(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                b[(r, c)] = 0.3 * v[r] * v[c];
            }
        }
        b[(1, 1)] += 0.05;
        let caps = [1.0, 0.4, 2.0];
        let e = Ellipsoid::new(&b, &caps, 3).unwrap();
        let mut got = Vec::new();
        e.for_each(|a| got.push(a.to_vec()));
        got.sort();
        for want in brute(&b, &caps, 3) {
            assert!(got.binary_search(&want).is_ok(), "missing {want:?}");
        }
    }

    #[test]
    fn no_candidates_for_nonpositive_caps() {
        let b = DMatrix::identity(2, 2);
        assert!(Ellipsoid::new(&b, &[0.0, 0.0], 2).is_none());
    }
}
