//! Exact integer elimination: ranks over the rationals without leaving `i128`.
//!
//! Rows are combined as `p * r_i - f * r_pivot` and then divided by the gcd of
//! their entries, which keeps magnitudes near the size of the input minors.

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn normalise(row: &mut [i128]) {
    let g = row.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        row.iter_mut().for_each(|x| *x /= g);
    }
}

/// Eliminates `row[col]` using `pivot` (whose entry at `col` is nonzero).
fn eliminate(row: &mut [i128], pivot: &[i128], col: usize) {
    let f = row[col];
    if f == 0 {
        return;
    }
    let p = pivot[col];
    let g = gcd(p, f);
    let (p, f) = (p / g, f / g);
    for (x, y) in row.iter_mut().zip(pivot) {
        *x = p * *x - f * *y;
    }
    normalise(row);
}

/// Incrementally maintained echelon basis of integer vectors.
#[derive(Debug, Clone, Default)]
pub(crate) struct IntBasis {
    rows: Vec<(usize, Vec<i128>)>,
}

impl IntBasis {
    pub(crate) fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Adds `v` if it is independent of the basis; returns whether the rank grew.
    pub(crate) fn insert(&mut self, v: &[i64]) -> bool {
        let mut row: Vec<i128> = v.iter().map(|&x| x as i128).collect();
        for (col, pivot) in &self.rows {
            eliminate(&mut row, pivot, *col);
        }
        match row.iter().position(|&x| x != 0) {
            Some(col) => {
                self.rows.push((col, row));
                true
            }
            None => false,
        }
    }
}

/// Exact canonical form of vectors modulo the rational span of a basis.
///
/// Two vectors get the same key iff their difference lies in the span.
#[derive(Debug, Clone)]
pub(crate) struct SpanReducer {
    /// Reduced echelon rows: each pivot column is zero in every other row.
    rows: Vec<(usize, Vec<i128>)>,
    /// Common multiple of the pivots, so keys stay integral.
    scale: i128,
}

impl SpanReducer {
    pub(crate) fn new(basis: &IntBasis) -> Self {
        let mut rows = basis.rows.clone();
        for i in 0..rows.len() {
            let (col, pivot) = rows[i].clone();
            for (j, (_, row)) in rows.iter_mut().enumerate() {
                if j != i {
                    eliminate(row, &pivot, col);
                }
            }
        }
        let scale = rows.iter().fold(1i128, |l, (c, r)| {
            let p = r[*c].abs();
            l / gcd(l, p) * p
        });
        Self { rows, scale }
    }

    pub(crate) fn key(&self, v: &[i64]) -> Vec<i128> {
        let mut out: Vec<i128> = v.iter().map(|&x| x as i128 * self.scale).collect();
        for (col, row) in &self.rows {
            let f = out[*col] / row[*col];
            if f != 0 {
                for (o, r) in out.iter_mut().zip(row) {
                    *o -= f * r;
                }
            }
        }
        out
    }
}

pub(crate) fn rank(rows: &[&[i64]]) -> usize {
    let mut basis = IntBasis::default();
    rows.iter().filter(|r| basis.insert(r)).count();
    basis.rank()
}

/// Integer row combination `sum_i coeffs[i] * row_i = (value, 0, .., 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct T0Certificate {
    pub coeffs: Vec<i64>,
    pub value: i64,
}

impl T0Certificate {
    /// The combination as exact fractions `coeffs[i] / value`, which produce `e_0`.
    pub fn rational(&self) -> Vec<(i64, i64)> {
        self.coeffs
            .iter()
            .map(|&c| {
                let g = gcd(c as i128, self.value as i128).max(1) as i64;
                (c / g, self.value / g)
            })
            .collect()
    }
}

/// Eliminates on every column except the first, carrying an identity block to
/// record the row operations; the first row with a zero tail and a nonzero
/// head is the certificate.
pub(crate) fn t0_certificate(rows: &[&[i64]]) -> Option<T0Certificate> {
    let l = rows.len();
    let n = rows.first()?.len();
    // Layout: [a_1..a_K | a_0 | e_1..e_L]
    let mut aug: Vec<Vec<i128>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v: Vec<i128> = r[1..].iter().map(|&x| x as i128).collect();
            v.push(r[0] as i128);
            v.extend((0..l).map(|j| (i == j) as i128));
            v
        })
        .collect();
    let tail = n - 1;
    let mut next = 0;
    for col in 0..tail {
        let Some(p) = (next..l).find(|&i| aug[i][col] != 0) else {
            continue;
        };
        aug.swap(next, p);
        let pivot = aug[next].clone();
        for row in aug.iter_mut().skip(next + 1) {
            eliminate(row, &pivot, col);
        }
        next += 1;
    }
    aug[next..].iter().find(|r| r[tail] != 0).map(|r| {
        let sign = r[tail].signum();
        T0Certificate {
            coeffs: r[tail + 1..].iter().map(|&c| (sign * c) as i64).collect(),
            value: (sign * r[tail]) as i64,
        }
    })
}

/// Unimodular reduction `q * m = e` with `e` in row echelon form.
#[derive(Debug, Clone)]
pub(crate) struct Echelon {
    pub(crate) e: Vec<Vec<i128>>,
    pub(crate) q: Vec<Vec<i128>>,
    pub(crate) q_inv: Vec<Vec<i128>>,
    /// Pivot column of each nonzero row of `e`.
    pub(crate) pivots: Vec<usize>,
}

fn identity(n: usize) -> Vec<Vec<i128>> {
    (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect()
}

pub(crate) fn echelon(m: &[Vec<i128>], cols: usize) -> Echelon {
    let r = m.len();
    let mut e = m.to_vec();
    let mut q = identity(r);
    let mut q_inv = identity(r);
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..cols {
        if next == r {
            break;
        }
        loop {
            let Some(p) = (next..r).filter(|&i| e[i][col] != 0).min_by_key(|&i| e[i][col].abs()) else {
                break;
            };
            e.swap(next, p);
            q.swap(next, p);
            q_inv.iter_mut().for_each(|row| row.swap(next, p));
            let mut clean = true;
            for i in next + 1..r {
                let f = e[i][col] / e[next][col];
                if f != 0 {
                    for c in 0..cols {
                        e[i][c] -= f * e[next][c];
                    }
                    for c in 0..r {
                        q[i][c] -= f * q[next][c];
                    }
                    for row in q_inv.iter_mut() {
                        row[next] += f * row[i];
                    }
                }
                clean &= e[i][col] == 0;
            }
            if clean {
                break;
            }
        }
        if e[next][col] != 0 {
            pivots.push(col);
            next += 1;
        }
    }
    Echelon { e, q, q_inv, pivots }
}

/// Integer solutions of `z * m = rhs` for a fixed `m` and varying `rhs`.
#[derive(Debug, Clone)]
pub(crate) struct LeftSolver {
    ech: Echelon,
    cols: usize,
}

impl LeftSolver {
    pub(crate) fn new(m: &[Vec<i128>], cols: usize) -> Self {
        Self { ech: echelon(m, cols), cols }
    }

    /// Basis of the solutions of `z * m = 0`.
    pub(crate) fn kernel(&self) -> &[Vec<i128>] {
        &self.ech.q[self.ech.pivots.len()..]
    }

    /// A particular solution, or `None` if there is no integer one.
    pub(crate) fn solve(&self, rhs: &[i128]) -> Option<Vec<i128>> {
        let ech = &self.ech;
        let rank = ech.pivots.len();
        let mut x = vec![0i128; rank];
        for (j, &pc) in ech.pivots.iter().enumerate() {
            let rest: i128 = (0..j).map(|i| x[i] * ech.e[i][pc]).sum();
            let d = rhs[pc] - rest;
            if d % ech.e[j][pc] != 0 {
                return None;
            }
            x[j] = d / ech.e[j][pc];
        }
        for c in 0..self.cols {
            let lhs: i128 = (0..rank).map(|i| x[i] * ech.e[i][c]).sum();
            if lhs != rhs[c] {
                return None;
            }
        }
        Some((0..ech.q.len()).map(|c| (0..rank).map(|i| x[i] * ech.q[i][c]).sum()).collect())
    }
}
