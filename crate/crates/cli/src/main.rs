//! `pal`: simulate, filter, fit and sample compartmental models from JSON
//! model files and CSV data.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "pal", version, about = "Poisson approximate likelihood filtering and inference")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate latent states and observations.
    Simulate(SimulateArgs),
    /// Run the PAL filter on data and write intensities and log terms.
    Filter(FilterArgs),
    /// Maximum-PAL estimation by coordinate ascent.
    Fit(FitArgs),
    /// Posterior sampling with PALMH, PMMH or delayed-acceptance PMMH.
    Mcmc(McmcArgs),
    /// Large-population limit trajectories, filter limits and contrast.
    Limits(LimitsArgs),
    /// Exact enumeration and particle-filter log-likelihoods for comparison.
    Oracle(OracleArgs),
    /// Time PAL and particle-filter evaluations across population sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// JSON model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads for replicate-level parallelism. Results do not depend
    /// on this value.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub threads: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    /// Latent steps; defaults to the model file's horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FilterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Observation CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Omit the data-only log-factorial terms.
    #[arg(long)]
    pub drop_constant: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    /// Maximum outer cycles of the optimizer.
    #[arg(long, default_value_t = 500)]
    pub cycles: usize,
    /// Golden-section iterations per coordinate visit.
    #[arg(long, default_value_t = 15)]
    pub line_iterations: usize,
    /// Stop after three cycles each improving by at most this much.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct McmcArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// palmh, pmmh or dapmmh.
    #[arg(long, default_value = "palmh")]
    pub algo: String,
    /// Recorded sweeps (one update of every parameter each).
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    /// Particles for pmmh and dapmmh.
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    /// Keep at most this many post-burn-in draws.
    #[arg(long, default_value_t = 25_000)]
    pub thin_to: usize,
    /// Fraction of recorded sweeps discarded as burn-in.
    #[arg(long, default_value_t = 0.2)]
    pub burn_in: f64,
    /// Proposal tuning sweeps before recording.
    #[arg(long, default_value_t = 500)]
    pub tuning: usize,
    /// Posterior predictive replicates written to `predictive.csv`; 0 skips.
    #[arg(long, default_value_t = 0)]
    pub predictive: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LimitsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Latent steps; defaults to the model file's horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Particle-filter replicates.
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    /// Largest count per compartment tracked by exact enumeration; 0 skips it.
    #[arg(long, default_value_t = 200)]
    pub state_cap: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated total population sizes, e.g. `1e3,1e5`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub vary_n: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    /// Timed repetitions per size; the median is reported.
    #[arg(long, default_value_t = 11)]
    pub reps: usize,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<pal_core::Error> for Failure {
    fn from(e: pal_core::Error) -> Self {
        let code = if e.is_incompatibility() {
            3
        } else if e.is_numerical() {
            4
        } else {
            2
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Filter(a) => commands::filter(a),
        Command::Fit(a) => commands::fit(a),
        Command::Mcmc(a) => commands::mcmc(a),
        Command::Limits(a) => commands::limits(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pal: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
