//! `levykit` command-line tool.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levykit::verify::Suite;
use std::path::PathBuf;

/// Exit status for malformed command lines.
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "levykit", version, about = "Lévy-type operators: scale analysis, symbols, densities, simulation and a spectral solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index estimates and scale profile of a measure.
    Analyze(AnalyzeArgs),
    /// The Fourier symbol on a grid's frequencies.
    Symbol(GridArgs),
    /// Transition density on a periodic grid.
    Density(DensityArgs),
    /// Monte Carlo increments and their empirical characteristic function.
    Simulate(SimulateArgs),
    /// Solve the parabolic problem described by a run configuration.
    Solve(SolveArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory receiving the outputs and manifest.txt.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Measure configuration file.
    #[arg(long)]
    pub measure: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub measure: PathBuf,
    /// Points per axis (a power of two).
    #[arg(long = "grid-n")]
    pub grid_n: Option<usize>,
    /// Half width L of the periodic box [−L, L)^d.
    #[arg(long = "grid-L")]
    pub grid_l: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Start time s.
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    /// End time t.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of independent increments.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Small-jump cutoff ε.
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Run configuration file.
    pub config: PathBuf,
    #[arg(long = "grid-n")]
    pub grid_n: Option<usize>,
    #[arg(long = "grid-L")]
    pub grid_l: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// all, measures, symbol, density, simulate, solver, orv, measure, or ids like 1,4,9.
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    pub suite: Suite,
    /// Adds rescale and index checks for this measure.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    /// Multiplies every accuracy tolerance.
    #[arg(long = "tol-scale", default_value_t = 1.0, value_parser = parse_positive)]
    pub tol_scale: f64,
    /// Also write verify.csv and manifest.txt here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: levykit::Error| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, found '{s}'")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("levykit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
