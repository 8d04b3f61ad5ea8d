//! `spillover`: simulate the two-pathogen model, locate and classify its
//! equilibria, sweep phase diagrams and run identifiability experiments.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "spillover", version, about = "Two-pathogen SIRS model with behavioral spillover")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate from the default initial state and write the trajectory.
    Simulate(SimulateArgs),
    /// Report the four equilibria with existence and stability.
    Equilibria(EquilibriaArgs),
    /// Persistence and dominance over a (s, r0_b) grid.
    Sweep(SweepArgs),
    /// Monte Carlo practical identifiability.
    Identify(IdentifyArgs),
    /// Approximate spillover fraction needed to exclude the weaker disease.
    Threshold(ThresholdArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model parameter file (`key = value`).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 365.0)]
    pub t_end: f64,
    /// Number of evenly spaced samples including both ends; daily if absent.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EquilibriaArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// JSON destination; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Template parameter file; `s` and `r0_b` are overridden per cell.
    #[arg(long)]
    pub config: PathBuf,
    /// `<n_s>x<n_r0b>` points over [0, 1] × [r0b-min, r0b-max].
    #[arg(long, default_value = "101x101")]
    pub grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub r0b_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub r0b_max: f64,
    /// Days simulated per cell.
    #[arg(long, default_value_t = 365.0)]
    pub horizon: f64,
    /// Prevalence below which disease B counts as excluded.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Worker threads; 0 uses all cores. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the approximate threshold curve over the r0_b axis.
    #[arg(long)]
    pub threshold_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Identifiability config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output prefix: writes `<out>.csv`, `<out>.json` and `<out>_fits.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub r0a: f64,
    #[arg(long)]
    pub r0b: Option<f64>,
    /// Write the curve over r0_b ∈ [1, r0a] to this CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(e: impl ToString) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn numeric(e: impl ToString) -> Self {
        CliError::Numeric(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Equilibria(a) => commands::equilibria(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Threshold(a) => commands::threshold(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
