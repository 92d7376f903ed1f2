use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "mto-lattice", version, about = "Rate regions of the many-to-one interference channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Achievable region, baselines and outer bound.
    Region(RegionArgs),
    /// Maximum symmetric rate over a sweep of the cross gain.
    Symrate(SymrateArgs),
    /// Optimal number of decoded sums over the (b2, b3) plane.
    OptimalL(OptimalLArgs),
    /// Gap and capacity claims on symmetric channels.
    Theorem3(Theorem3Args),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON channel description.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    a_max: Option<i64>,
    #[arg(long)]
    l_max: Option<usize>,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args, Debug, Clone, Default)]
struct GridFlags {
    #[arg(long)]
    lambda_steps: Option<usize>,
    #[arg(long)]
    beta_steps: Option<usize>,
    #[arg(long)]
    gamma_steps: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    beta_range: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    gamma_range: Option<Vec<f64>>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Cognitive,
    Noncognitive,
}

#[derive(Args, Debug)]
struct RegionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Mode::Cognitive)]
    mode: Mode,
    /// Random covariance pairs for the outer bound.
    #[arg(long, default_value_t = 200)]
    outer_samples: usize,
}

#[derive(Args, Debug)]
struct SymrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    b_max: f64,
    #[arg(long, default_value_t = 101)]
    steps: usize,
}

#[derive(Args, Debug)]
struct OptimalLArgs {
    #[command(flatten)]
    common: Common,
    /// Points per axis.
    #[arg(long, default_value_t = 31)]
    grid_steps: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b_min: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    b_max: f64,
    /// Run once per power, writing `optimalL_P<p>.csv` each.
    #[arg(long, value_delimiter = ',')]
    powers: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct Theorem3Args {
    #[arg(long)]
    power: f64,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    users: usize,
    /// Cross gains to check.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    b: Vec<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Region(a) => commands::region(a),
        Command::Symrate(a) => commands::symrate(a),
        Command::OptimalL(a) => commands::optimal_l(a),
        Command::Theorem3(a) => commands::theorem3(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
