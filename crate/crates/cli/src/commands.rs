use std::path::{Path, PathBuf};
use std::time::Instant;

use mto_lattice::baselines::{bc_outer_bound, dpc_symmetric_rate, snd_symmetric_rate};
use mto_lattice::cf_rates::capacity;
use mto_lattice::channel_model::{ConfigDocument, GridOverrides};
use mto_lattice::regions::{
    cognitive_region, dpc_frontier, max_symmetric_rate, noncognitive_region, optimal_l_map, snd_frontier,
    theorem3_check, Grid2d, RegionBudget, RegionError, SweepGrid, Theorem3Report,
};
use mto_lattice::ChannelConfig;
use serde_json::json;
use thiserror::Error;

use crate::output::{joined, joined_int, num, write_csv, RunManifest};
use crate::{Common, GridFlags, Mode, OptimalLArgs, RegionArgs, SymrateArgs, Theorem3Args};

/// Cognitive-rate levels per power split when tracing the SND frontier.
const SND_LEVELS: usize = 51;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

impl From<RegionError> for CliError {
    fn from(e: RegionError) -> Self {
        match e {
            RegionError::Empty(_) => CliError::Infeasible(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

struct Setup {
    config: ChannelConfig,
    grid: SweepGrid,
    budget: RegionBudget,
}

fn overrides(flags: &GridFlags) -> GridOverrides {
    let pair = |v: &Option<Vec<f64>>| v.as_ref().map(|v| [v[0], v[1]]);
    GridOverrides {
        lambda_steps: flags.lambda_steps,
        beta_steps: flags.beta_steps,
        gamma_steps: flags.gamma_steps,
        beta_range: pair(&flags.beta_range),
        gamma_range: pair(&flags.gamma_range),
    }
}

fn set_jobs(jobs: usize) {
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}

fn setup(common: &Common) -> Result<Setup, CliError> {
    set_jobs(common.jobs);
    let doc = ConfigDocument::load(&common.config).map_err(|e| CliError::Config(e.to_string()))?;
    let (config, _) = doc.resolve().map_err(|e| CliError::Config(e.to_string()))?;
    let grid = SweepGrid::default()
        .with_overrides(&doc.grid.clone().unwrap_or_default())
        .with_overrides(&overrides(&common.grid));
    grid.validate()?;
    if common.a_max.is_some_and(|a| a < 1) {
        return Err(CliError::Config("--a-max must be at least 1".into()));
    }
    if common.l_max.is_some_and(|l| l < 1) {
        return Err(CliError::Config("--l-max must be at least 1".into()));
    }
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    let budget = RegionBudget {
        a_max: common.a_max,
        l_max: common.l_max,
        ..RegionBudget::default()
    };
    Ok(Setup { config, grid, budget })
}

fn manifest(
    command: &str,
    common: &Common,
    grid: &SweepGrid,
    inputs: serde_json::Value,
    outputs: Vec<PathBuf>,
    start: Instant,
) -> RunManifest {
    RunManifest {
        command: command.into(),
        config_path: Some(common.config.clone()),
        seed: Some(common.seed),
        grid: serde_json::to_value(grid).unwrap_or_default(),
        inputs,
        outputs,
        engine_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    }
}

fn rate_header(users: usize) -> Vec<String> {
    (0..=users).map(|k| format!("R{k}")).collect()
}

pub fn region(args: RegionArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let s = setup(&args.common)?;
    let k = s.config.users;
    let region = match args.mode {
        Mode::Cognitive => cognitive_region(&s.config, &s.grid, &s.budget)?,
        Mode::Noncognitive => noncognitive_region(&s.config, &s.grid, &s.budget)?,
    };
    let out = &args.common.out;

    let mut header = rate_header(k);
    header.extend(["L", "A_flat", "lambda", "beta", "gamma", "frontier_flag"].map(String::from));
    let rows: Vec<Vec<String>> = region
        .points
        .iter()
        .map(|p| {
            let mut r: Vec<String> = p.point.rates.iter().map(|x| num(*x)).collect();
            r.push(p.matrix.rows().to_string());
            r.push(joined_int(&p.matrix.flattened()));
            r.push(joined(&p.params.lambda));
            r.push(joined(&p.params.beta));
            r.push(joined(&p.params.gamma));
            r.push(u8::from(p.frontier).to_string());
            r
        })
        .collect();
    let region_path = out.join("region.csv");
    write_csv(&region_path, &header, &rows)?;

    let lambdas = match args.mode {
        Mode::Cognitive => s.grid.lambdas(),
        Mode::Noncognitive => vec![0.0],
    };
    let mut header = vec!["scheme".to_string(), "lambda".to_string()];
    header.extend(rate_header(k));
    let mut rows = Vec::new();
    for (scheme, points) in [
        ("DPC", dpc_frontier(&s.config, &lambdas)),
        ("SND", snd_frontier(&s.config, &lambdas, SND_LEVELS)),
    ] {
        for (l, p) in points {
            let mut r = vec![scheme.to_string(), num(l)];
            r.extend(p.rates.iter().map(|x| num(*x)));
            rows.push(r);
        }
    }
    let baselines_path = out.join("baselines.csv");
    write_csv(&baselines_path, &header, &rows)?;

    let envelope = bc_outer_bound(&s.config, args.outer_samples, args.common.seed);
    let rows: Vec<Vec<String>> = envelope.vertices.iter().map(|(a, b)| vec![num(*a), num(*b)]).collect();
    let outer_path = out.join("outer.csv");
    write_csv(&outer_path, &["R0".into(), "Rbar".into()], &rows)?;

    let frontier = region.frontier().count();
    println!(
        "{} points, {} on the frontier, over {} parameter choices{}",
        region.points.len(),
        frontier,
        region.parameter_points,
        if region.truncated { " (some searches truncated)" } else { "" }
    );
    let inputs = json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "a_max": args.common.a_max,
        "l_max": args.common.l_max,
        "outer_samples": args.outer_samples,
        "snd_levels": SND_LEVELS,
    });
    manifest(
        "region",
        &args.common,
        &s.grid,
        inputs,
        vec![region_path, baselines_path, outer_path],
        start,
    )
    .write(out)?;
    Ok(())
}

fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| if i == steps - 1 { hi } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 })
        .collect()
}

fn check_range(lo: f64, hi: f64, steps: usize) -> Result<(), CliError> {
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
        return Err(CliError::Config(format!("need 0 <= b_min <= b_max, got [{lo}, {hi}]")));
    }
    if steps == 0 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    Ok(())
}

pub fn symrate(args: SymrateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let s = setup(&args.common)?;
    check_range(args.b_min, args.b_max, args.steps)?;
    if !s.config.is_symmetric() {
        return Err(CliError::Config("symrate needs equal cross and direct gains".into()));
    }
    let (k, p, h) = (s.config.users, s.config.power, s.config.direct[0]);
    let cap = capacity(p).min(capacity(h * h * p));
    let mut rows = Vec::new();
    for b in axis(args.b_min, args.b_max, args.steps) {
        let config = ChannelConfig::symmetric(k, p, b, h);
        let proposed = max_symmetric_rate(&config, &s.grid, &s.budget)?;
        let snd = snd_symmetric_rate(&config).map(num).unwrap_or_default();
        rows.push(vec![num(b), num(proposed.value), num(dpc_symmetric_rate(&config)), snd, num(cap)]);
    }
    let header = ["b", "Rsym_proposed", "Rsym_dpc", "Rsym_snd", "Rsym_cap"].map(String::from);
    let path = args.common.out.join("symrate.csv");
    write_csv(&path, &header, &rows)?;
    println!("{} rows", rows.len());
    let inputs = json!({
        "b_min": args.b_min,
        "b_max": args.b_max,
        "steps": args.steps,
        "a_max": args.common.a_max,
    });
    manifest("symrate", &args.common, &s.grid, inputs, vec![path], start).write(&args.common.out)?;
    Ok(())
}

pub fn optimal_l(args: OptimalLArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let s = setup(&args.common)?;
    check_range(args.b_min, args.b_max, args.grid_steps)?;
    if s.config.users != 3 {
        return Err(CliError::Config(format!("optimal-l needs K = 3, got K = {}", s.config.users)));
    }
    let runs: Vec<(f64, PathBuf)> = match &args.powers {
        Some(ps) => ps
            .iter()
            .map(|&p| (p, args.common.out.join(format!("optimalL_P{}.csv", num(p)))))
            .collect(),
        None => vec![(s.config.power, args.common.out.join("optimalL.csv"))],
    };
    let points = Grid2d::square(args.b_min, args.b_max, args.grid_steps);
    let header = ["b2", "b3", "L_opt", "sumrate"].map(String::from);
    for (p, path) in &runs {
        let mut base = s.config.clone();
        base.power = *p;
        let map = optimal_l_map(&base, &points, &s.grid, &s.budget)?;
        let rows: Vec<Vec<String>> = map
            .cells
            .iter()
            .map(|c| vec![num(c.b2), num(c.b3), c.l_opt.to_string(), num(c.sum_rate)])
            .collect();
        write_csv(path, &header, &rows)?;
        let mut counts = [0usize; 8];
        for c in &map.cells {
            counts[c.l_opt.min(7)] += 1;
        }
        println!("P = {p}: optimal L counts {:?}", &counts[1..=4]);
    }
    let inputs = json!({
        "b1": s.config.cross[0],
        "h": s.config.direct,
        "b_min": args.b_min,
        "b_max": args.b_max,
        "grid_steps": args.grid_steps,
        "powers": runs.iter().map(|r| r.0).collect::<Vec<_>>(),
        "a_max": args.common.a_max,
        "l_max": args.common.l_max,
    });
    let outputs = runs.into_iter().map(|r| r.1).collect();
    manifest("optimal-l", &args.common, &s.grid, inputs, outputs, start).write(&args.common.out)?;
    Ok(())
}

fn regime(r: &Theorem3Report) -> &'static str {
    match (r.vacuous, r.gap_regime, r.capacity_regime) {
        (true, _, true) => "vacuous+capacity",
        (true, _, false) => "vacuous",
        (false, true, true) => "gap+capacity",
        (false, true, false) => "gap",
        (false, false, true) => "capacity",
        (false, false, false) => "none",
    }
}

pub fn theorem3(args: Theorem3Args) -> Result<(), CliError> {
    let start = Instant::now();
    if !(args.power.is_finite() && args.power > 0.0) || !args.h.is_finite() || args.users == 0 {
        return Err(CliError::Config("need P > 0, finite h and K >= 1".into()));
    }
    if args.b.iter().any(|b| !b.is_finite()) {
        return Err(CliError::Config("cross gains must be finite".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &b in &args.b {
        let r = theorem3_check(args.power, args.h, args.users, b);
        let gaps = r.gaps();
        let gap_k = gaps[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "b = {}: gap R0 = {:.6}, gap Rk = {:.6}, capacity {}, regime {}, {}",
            num(b),
            gaps[0],
            gap_k,
            r.capacity_achieved(),
            regime(&r),
            if r.holds() { "ok" } else { "FALSIFIED" }
        );
        for f in &r.failures {
            println!("  {f}");
            failures.push(format!("b = {}: {f}", num(b)));
        }
        rows.push(vec![
            num(b),
            num(gaps[0]),
            num(gap_k),
            r.capacity_achieved().to_string(),
            regime(&r).to_string(),
            r.holds().to_string(),
        ]);
    }
    let header = ["b", "gap_R0", "gap_Rk", "capacity_achieved", "regime", "holds"].map(String::from);
    let path = args.out.join("theorem3.csv");
    write_csv(&path, &header, &rows)?;
    RunManifest {
        command: "theorem3".into(),
        config_path: None,
        seed: None,
        grid: serde_json::Value::Null,
        inputs: json!({ "P": args.power, "h": args.h, "K": args.users, "b": args.b }),
        outputs: vec![path],
        engine_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    }
    .write(Path::new(&args.out))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failures.join("; ")))
    }
}
