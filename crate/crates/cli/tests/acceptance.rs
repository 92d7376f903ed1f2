//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mto_lattice::baselines::{bc_outer_bound, dpc_rates, dpc_symmetric_rate, snd_rates};
use mto_lattice::cf_rates::{build_quadratic_form, computation_rates, dpc_gamma, CoeffChain};
use mto_lattice::coeff_search::{enumerate_valid, is_valid};
use mto_lattice::regions::{
    cognitive_region, dpc_frontier, max_symmetric_rate, optimal_l_map, theorem3_check, Grid2d, RegionBudget,
    SweepGrid,
};
use mto_lattice::{theorem1_rates, ChannelConfig, CoeffMatrix, RatePoint, RateOptions, SchemeParams, SearchBudget};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{grid_min_noise, snd_subset_bounds, valid_by_minors, zero_noise_slack};

const DPC_TOL: f64 = 1e-9;
const GRID_REL_TOL: f64 = 1e-6;
const CAPACITY_TOL: f64 = 1e-9;
const GAP_LIMIT: f64 = 0.5 + 1e-9;
const FRONTIER_TOL: f64 = 1e-9;
const ENVELOPE_TOL: f64 = 1e-6;
const SYM_TOL: f64 = 1e-6;
const PROPERTY_CASES: usize = 1000;

type Check = Result<String, String>;

fn random_config(rng: &mut ChaCha8Rng, max_users: usize) -> ChannelConfig {
    let k = rng.random_range(1..=max_users);
    let p = rng.random_range(0.5..50.0);
    let b = (0..k).map(|_| rng.random_range(0.0..4.0)).collect();
    let h = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
    ChannelConfig::new(p, b, h)
}

fn random_params(rng: &mut ChaCha8Rng, k: usize) -> SchemeParams {
    SchemeParams {
        lambda: (0..k).map(|_| rng.random_range(0.0..1.0)).collect(),
        beta: (0..=k).map(|_| rng.random_range(0.25..4.0)).collect(),
        gamma: (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

fn random_rows(rng: &mut ChaCha8Rng, k: usize, len: usize, a_max: i64) -> Vec<Vec<i64>> {
    loop {
        let rows: Vec<Vec<i64>> = (0..len)
            .map(|_| (0..=k).map(|_| rng.random_range(-a_max..=a_max)).collect())
            .collect();
        if rows.last().unwrap().iter().any(|&x| x != 0) {
            return rows;
        }
    }
}

fn noise(c: &ChannelConfig, p: &SchemeParams, rows: &[Vec<i64>]) -> f64 {
    computation_rates(c, p, &CoeffChain::new(rows.to_vec()), &RateOptions::default())
        .unwrap()
        .noise_var
}

fn dpc_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let c = random_config(&mut rng, 4);
        let k = c.users;
        let lambda: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let gamma = (0..k).map(|j| dpc_gamma(c.direct[j], lambda[j], 1.0, c.power)).collect();
        let params = SchemeParams {
            lambda: lambda.clone(),
            beta: vec![1.0; k + 1],
            gamma,
        };
        let mut e0 = vec![0; k + 1];
        e0[0] = 1;
        let got = theorem1_rates(&c, &params, &CoeffMatrix::from_rows(vec![e0]), &RateOptions::default())
            .map_err(|e| e.to_string())?
            .point;
        let want = dpc_rates(&c, &lambda).map_err(|e| e.to_string())?;
        for (x, y) in got.rates.iter().zip(&want.rates) {
            worst = worst.max((x - y).abs());
            if (x - y).abs() > DPC_TOL {
                return Err(format!("config {i}: {:?} vs DPC {:?}", got.rates, want.rates));
            }
        }
    }
    Ok(format!("200 configs, worst deviation {worst:.1e}"))
}

fn closed_form_vs_grid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..500 {
        let c = random_config(&mut rng, 4);
        let p = random_params(&mut rng, c.users);
        let len = rng.random_range(1..=3);
        let rows = random_rows(&mut rng, c.users, len, 3);
        let slack = zero_noise_slack(&c, &p, rows.last().unwrap());
        let chain = CoeffChain::new(rows);
        let closed = computation_rates(&c, &p, &chain, &RateOptions::default()).unwrap().noise_var;
        let grid = grid_min_noise(&c, &p, &chain);
        let used = (grid - closed).abs() / (GRID_REL_TOL * closed.max(grid) + slack);
        worst = worst.max(used);
        if used > 1.0 {
            return Err(format!("instance {i}: grid {grid} vs closed form {closed}"));
        }
    }
    Ok(format!("500 instances, worst deviation {worst:.2} of tolerance"))
}

fn capacity_point() -> Check {
    let (p, h) = (5.0f64, 1.0f64);
    let b = ((1.0 + p) * (1.0 + h * h * p) / p).sqrt();
    let c0 = 0.5 * (1.0 + p).log2();
    let ck = 0.5 * (1.0 + h * h * p).log2();
    let mut worst: f64 = 0.0;
    for k in [1, 2, 3, 5, 8] {
        let r = theorem3_check(p, h, k, b);
        let point = &r.second.point;
        worst = worst.max((point.primary() - c0).abs());
        for rk in &point.rates[1..] {
            worst = worst.max((rk - ck).abs());
        }
        if worst > CAPACITY_TOL || !r.holds() {
            return Err(format!("K = {k}: {:?}, failures {:?}", point.rates, r.failures));
        }
    }
    Ok(format!("K in {{1,2,3,5,8}}, worst deviation {worst:.1e}"))
}

fn constant_gap() -> Check {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for p in [2.0f64, 4.0, 8.0, 16.0] {
        for h in [0.5, 1.0, 2.0] {
            for m in [1.0, 1.5, 3.0] {
                for k in [1, 3, 6] {
                    let b = h * p.sqrt().ceil() * m;
                    let r = theorem3_check(p, h, k, b);
                    let gap = r.max_gap();
                    worst = worst.max(gap);
                    points += 1;
                    if gap > GAP_LIMIT || !r.holds() {
                        return Err(format!("P={p} h={h} b={b} K={k}: gap {gap}, failures {:?}", r.failures));
                    }
                }
            }
        }
    }
    Ok(format!("{points} points, largest gap {worst:.4} bit"))
}

fn optimal_l_pattern() -> Check {
    let grid = Grid2d::square(0.0, 6.0, 31);
    let run = |p: f64| {
        let base = ChannelConfig::new(p, vec![3.5, 0.0, 0.0], vec![1.0; 3]);
        optimal_l_map(&base, &grid, &SweepGrid::default(), &RegionBudget::default()).map_err(|e| e.to_string())
    };
    let count = |cells: &[mto_lattice::regions::OptimalLCell], f: &dyn Fn(usize) -> bool| {
        cells.iter().filter(|c| f(c.l_opt)).count()
    };
    let high = run(10.0)?;
    let n = high.cells.len() as f64;
    let fours = count(&high.cells, &|l| l == 4);
    let short = count(&high.cells, &|l| l <= 2) as f64 / n;
    let low = run(1.0)?;
    let long = count(&low.cells, &|l| l >= 2) as f64 / low.cells.len() as f64;
    let truncated = high.cells.iter().chain(&low.cells).filter(|c| c.truncated).count();
    let detail = format!(
        "P=10: {fours} cells with L=4, L<=2 on {:.1}%; P=1: L>=2 on {:.1}%; {truncated} truncated",
        100.0 * short,
        100.0 * long
    );
    if fours == 0 && short > 0.6 && long > 0.5 && truncated == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dominance() -> Check {
    let three_users = ChannelConfig::symmetric(3, 10.0, 4.0, 1.5);
    let grid = SweepGrid::default();
    let region = cognitive_region(&three_users, &grid, &RegionBudget::default()).map_err(|e| e.to_string())?;
    let front: Vec<&RatePoint> = region.frontier().map(|p| &p.point).collect();
    let dpc = dpc_frontier(&three_users, &grid.lambdas());
    for (l, d) in &dpc {
        if !front.iter().any(|q| q.dominates(d, FRONTIER_TOL)) {
            return Err(format!("DPC point at lambda {l} ({:?}) is not dominated", d.rates));
        }
    }
    let envelope = bc_outer_bound(&three_users, 200, 0);
    for q in &front {
        let rbar = q.rates[1..].iter().sum::<f64>() / 3.0;
        if !envelope.contains(q.primary(), rbar, ENVELOPE_TOL) {
            return Err(format!("{:?} lies outside the outer envelope", q.rates));
        }
    }

    let target = 0.5 * 6f64.log2() - SYM_TOL;
    let free = dpc_symmetric_rate(&ChannelConfig::symmetric(3, 5.0, 0.0, 1.0));
    if free < target {
        return Err(format!("DPC symmetric rate {free} below the cap without interference"));
    }
    let mut reached = None;
    let mut dpc_best: f64 = 0.0;
    for i in 1..=100 {
        let b = 0.1 * i as f64;
        let c = ChannelConfig::symmetric(3, 5.0, b, 1.0);
        let s = max_symmetric_rate(&c, &grid, &RegionBudget::default()).map_err(|e| e.to_string())?;
        if s.value >= target && reached.is_none() {
            reached = Some(b);
        }
        dpc_best = dpc_best.max(dpc_symmetric_rate(&c));
    }
    let detail = format!(
        "{} DPC points dominated, {} frontier points inside the envelope; for b in (0, 10] R_sym reaches the cap at b = {:?}, DPC peaks at {dpc_best:.4}",
        dpc.len(),
        front.len(),
        reached
    );
    if reached.is_some() && dpc_best < target {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = RateOptions::default();
    for i in 0..PROPERTY_CASES {
        let c = random_config(&mut rng, 4);
        let p = random_params(&mut rng, c.users);
        let len = rng.random_range(1..=3);
        let rows = random_rows(&mut rng, c.users, len, 3);

        let flipped: Vec<Vec<i64>> = rows
            .iter()
            .map(|r| if rng.random_bool(0.5) { r.iter().map(|x| -x).collect() } else { r.clone() })
            .collect();
        let a = computation_rates(&c, &p, &CoeffChain::new(rows.clone()), &opts).unwrap();
        let b = computation_rates(&c, &p, &CoeffChain::new(flipped), &opts).unwrap();
        if a.rates.iter().zip(&b.rates).any(|(x, y)| (x - y).abs() > 1e-9) {
            return Err(format!("sign invariance, case {i}: {rows:?}"));
        }

        let slack = zero_noise_slack(&c, &p, rows.last().unwrap());
        let mut prev = f64::INFINITY;
        for start in (0..rows.len()).rev() {
            let n = noise(&c, &p, &rows[start..]);
            if n > prev * (1.0 + 1e-9) + slack {
                return Err(format!("side information, case {i}: {rows:?}"));
            }
            prev = n;
        }

        let form = build_quadratic_form(&c, &p, &CoeffChain::new(rows.clone())).unwrap();
        let scale = form.b.abs().max().max(1.0);
        if SymmetricEigen::new(form.b.clone()).eigenvalues.min() < -1e-9 * scale {
            return Err(format!("B not PSD, case {i}"));
        }

        let lambda: Vec<f64> = (0..c.users).map(|_| rng.random_range(0.0..1.0)).collect();
        let region = snd_rates(&c, &lambda).unwrap();
        let want = snd_subset_bounds(&c, &lambda);
        let point = RatePoint::new((0..=c.users).map(|_| rng.random_range(0.0..3.0)).collect());
        let by_subsets = want
            .iter()
            .all(|(co, bound)| co.iter().zip(&point.rates).map(|(x, r)| x * r).sum::<f64>() <= *bound);
        let bounds_agree = region.receiver0.len() == want.len()
            && region
                .receiver0
                .iter()
                .zip(&want)
                .all(|(g, (co, bound))| &g.coeffs == co && (g.bound - bound).abs() <= 1e-12 * bound.max(1.0));
        let direct = region.direct.iter().all(|d| d.holds(&point, 0.0));
        if !bounds_agree || region.contains(&point, 0.0) != (by_subsets && direct) {
            return Err(format!("SND subsets, case {i}"));
        }
    }

    let mut exhaustive = 0;
    for (users, l_max) in [(1, 2), (2, 3)] {
        let rows = canonical_rows(users);
        let mut want = BTreeSet::new();
        let mut layer: Vec<Vec<Vec<i64>>> = vec![Vec::new()];
        for _ in 0..l_max {
            let mut next = Vec::new();
            for m in &layer {
                for r in &rows {
                    let mut m = m.clone();
                    m.push(r.clone());
                    exhaustive += 1;
                    if valid_by_minors(&m) {
                        want.insert(m.clone());
                    }
                    next.push(m);
                }
            }
            layer = next;
        }
        let got: BTreeSet<Vec<Vec<i64>>> = enumerate_valid(users, &SearchBudget::new(1, l_max))
            .map(|m| m.into_rows())
            .collect();
        if got != want {
            return Err(format!("K = {users}: enumeration and minors disagree"));
        }
    }
    for i in 0..PROPERTY_CASES {
        let k = rng.random_range(1..=4);
        let l = rng.random_range(1..=4);
        let rows: Vec<Vec<i64>> = (0..l)
            .map(|_| (0..=k).map(|_| rng.random_range(-3..=3)).collect())
            .collect();
        if is_valid(&CoeffMatrix::from_rows(rows.clone())) != valid_by_minors(&rows) {
            return Err(format!("membership, case {i}: {rows:?}"));
        }
    }
    Ok(format!(
        "{PROPERTY_CASES} cases per suite, {exhaustive} exhaustive membership checks"
    ))
}

/// Rows over {-1, 0, 1} whose first nonzero entry is positive.
fn canonical_rows(users: usize) -> Vec<Vec<i64>> {
    (0..3usize.pow(users as u32 + 1))
        .map(|mut t| {
            (0..=users)
                .map(|_| {
                    let x = (t % 3) as i64 - 1;
                    t /= 3;
                    x
                })
                .collect::<Vec<i64>>()
        })
        .filter(|r| r.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0))
        .collect()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("channel.json");
    std::fs::write(&config, r#"{"K": 3, "P": 10, "b": [4, 4, 4], "h": [1.5, 1.5, 1.5]}"#).map_err(|e| e.to_string())?;
    let run = |out: &Path| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_mto-lattice"))
            .args(["region", "--seed", "3", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&status.stderr).into_owned())
        }
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a)?;
    run(&b)?;
    let mut bytes = 0;
    for name in ["region.csv", "baselines.csv", "outer.csv"] {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        bytes += x.len();
    }
    Ok(format!("3 CSVs, {bytes} bytes, identical"))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 8] = [
        ("DPC equivalence of the single-sum matrix", 5, dpc_equivalence),
        ("closed-form noise vs grid search", 120, closed_form_vs_grid),
        ("capacity point of the symmetric channel", 10, capacity_point),
        ("constant gap of the symmetric channel", 60, constant_gap),
        ("optimal number of sums", 1800, optimal_l_pattern),
        ("dominance over DPC and inside the outer bound", 600, dominance),
        ("property suites", 120, properties),
        ("deterministic region output", 600, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (ok, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} - {name}: {detail} [{:.2}s of {limit}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
