//! Reference computations that share no code with the library internals.
#![allow(dead_code)]

use mto_lattice::cf_rates::{noise_variance_direct, scaled_row, CoeffChain};
use mto_lattice::{ChannelConfig, SchemeParams};

fn det(m: &[Vec<i128>]) -> i128 {
    match m.len() {
        0 => 1,
        1 => m[0][0],
        n => (0..n)
            .map(|c| {
                let minor: Vec<Vec<i128>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, &x)| x).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1 } else { -1 };
                sign * m[0][c] * det(&minor)
            })
            .sum(),
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if n < k {
        return Vec::new();
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Largest order of a nonzero minor.
pub fn minor_rank(rows: &[Vec<i64>]) -> usize {
    let l = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    for r in (1..=l.min(n)).rev() {
        for rs in subsets(l, r) {
            for cs in subsets(n, r) {
                let m: Vec<Vec<i128>> = rs
                    .iter()
                    .map(|&i| cs.iter().map(|&j| rows[i][j] as i128).collect())
                    .collect();
                if det(&m) != 0 {
                    return r;
                }
            }
        }
    }
    0
}

pub fn valid_by_minors(rows: &[Vec<i64>]) -> bool {
    let tails: Vec<Vec<i64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
    !rows.is_empty() && minor_rank(rows) == minor_rank(&tails) + 1
}

/// Cancellation error of a noise value that should vanish, for a chain
/// ending in `row`.
pub fn zero_noise_slack(config: &ChannelConfig, params: &SchemeParams, row: &[i64]) -> f64 {
    let a: f64 = scaled_row(params, row).iter().map(|x| x * x).sum();
    1e-10 * config.power * a.max(1.0)
}

/// Minimum of the literal noise expression over the scaling factors, by a
/// grid pattern search that recentres on the best point, widens when the
/// best point is on the boundary and narrows otherwise. The search restarts
/// from the best point until a full pass stops improving it.
pub fn grid_min_noise(config: &ChannelConfig, params: &SchemeParams, chain: &CoeffChain) -> f64 {
    let f = |a: &[f64]| noise_variance_direct(config, params, chain, a).unwrap();
    let mut centre = vec![0.0; chain.len()];
    let mut best = f(&centre);
    for _ in 0..50 {
        let before = best;
        pattern_search(&f, &mut centre, &mut best);
        if best >= before * (1.0 - 1e-12) {
            break;
        }
    }
    best
}

fn pattern_search(f: &impl Fn(&[f64]) -> f64, centre: &mut Vec<f64>, best: &mut f64) {
    const SIDE: usize = 9;
    let dims = centre.len();
    let mut width = 1.0;
    let mut point = vec![0.0; dims];
    for _ in 0..4000 {
        let mut arg = centre.clone();
        let mut on_edge = false;
        for idx in 0..SIDE.pow(dims as u32) {
            let mut t = idx;
            let mut edge = false;
            for (d, p) in point.iter_mut().enumerate() {
                let i = t % SIDE;
                t /= SIDE;
                edge |= i == 0 || i == SIDE - 1;
                *p = centre[d] + width * (2.0 * i as f64 / (SIDE - 1) as f64 - 1.0);
            }
            let v = f(&point);
            if v < *best {
                *best = v;
                arg.copy_from_slice(&point);
                on_edge = edge;
            }
        }
        *centre = arg;
        width *= if on_edge { 2.0 } else { 0.5 };
        let scale = 1.0 + centre.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if width < 1e-11 * scale {
            break;
        }
    }
}

/// `R_0 + sum_{j in J} R_j <= 1/2 log2(1 + g_0^2 + sum_{j in J} g_j^2)` for
/// every subset `J`, with `g` the gains of the independent unit-power
/// signals at Rx 0. Returned in increasing bitmask order, `J = {}` first.
pub fn snd_subset_bounds(config: &ChannelConfig, lambda: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let p = config.power;
    let k = config.users;
    let mut g = vec![p.sqrt()];
    for j in 0..k {
        g[0] += config.cross[j] * (lambda[j] * p).sqrt();
    }
    for j in 0..k {
        g.push(config.cross[j] * ((1.0 - lambda[j]) * p).sqrt());
    }
    (0u32..1 << k)
        .map(|mask| {
            let mut coeffs = vec![1.0];
            let mut snr = g[0] * g[0];
            for j in 0..k {
                let inside = mask >> j & 1 == 1;
                coeffs.push(if inside { 1.0 } else { 0.0 });
                if inside {
                    snr += g[j + 1] * g[j + 1];
                }
            }
            (coeffs, 0.5 * (1.0 + snr).log2())
        })
        .collect()
}
