//! `kt`: simulate the two-line Kac–Ising system, integrate its limiting
//! equations, analyse their stability and run the verification experiments.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kt", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads for ensemble runs and scans [default: available parallelism]
    #[arg(long, global = true, env = "KT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration file (TOML)
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    /// Output directory [default: output.directory, or "kt-output"]
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    /// Output formats, comma separated [default: output.formats, or "csv,json"]
    #[arg(long, value_delimiter = ',', value_enum)]
    pub format: Option<Vec<Format>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate microscopic trajectories and record the configured observables
    Simulate(commands::SimulateArgs),
    /// Integrate the nonlocal macroscopic system (u1, u2, v)
    Pde(commands::PdeArgs),
    /// Integrate the mean-field system (m1, m2)
    Ode(commands::OdeArgs),
    /// Dispersion relation of the linearization at the origin
    Dispersion(commands::DispersionArgs),
    /// Scan couplings and kernel widths for Turing instability
    Scan(commands::ScanArgs),
    /// Hydrodynamic convergence experiment (exit 3 if the check fails)
    Converge(commands::ConvergeArgs),
    /// Martingale variance scaling experiment (exit 3 if the check fails)
    Variance(commands::VarianceArgs),
    /// Propagation-of-chaos gap experiment (exit 3 if the check fails)
    ChaosGap(commands::ChaosGapArgs),
    /// Fuzz the closed-form drifts against the brute-force generator (exit 3 on mismatch)
    DriftCheck(commands::DriftCheckArgs),
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Validation("threads must be ≥ 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Pde(a) => commands::pde(a),
        Command::Ode(a) => commands::ode(a),
        Command::Dispersion(a) => commands::dispersion(a),
        Command::Scan(a) => commands::scan(a),
        Command::Converge(a) => commands::converge(a),
        Command::Variance(a) => commands::variance(a),
        Command::ChaosGap(a) => commands::chaos_gap(a),
        Command::DriftCheck(a) => commands::drift_check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Validation(_) => "invalid input",
                CliError::Runtime(_) => "runtime error",
                CliError::CheckFailed(_) => "check failed",
            };
            eprintln!("kt: {kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
