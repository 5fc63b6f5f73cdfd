//! `switchbound`: simulate switched systems, compute invariant ellipsoids and
//! check them.
//!
//! Exit codes: 0 success, 1 error, 2 infeasible, 3 verification failure.

mod commands;
mod config;
mod csv;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors that end a command with exit code 1.
#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<switchbound::Error> for CliError {
    fn from(e: switchbound::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(format!("i/o: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok = 0,
    Infeasible = 2,
    Violations = 3,
}

#[derive(Parser, Debug)]
#[command(
    name = "switchbound",
    version,
    about = "Invariant ellipsoids for switched affine and noisy linear systems"
)]
struct Cli {
    /// Progress messages on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the system and write one state per CSV row.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        /// Leading states to drop from the output.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Noisy systems: append the noise-free covariance recursion,
        /// started at x0·x0ᵀ, to each row.
        #[arg(long)]
        covariances: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Write covariances in full vec coordinates.
        #[arg(long)]
        no_reduce: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for an invariant ellipsoid and write a JSON report.
    Bound {
        config: PathBuf,
        /// Boundary samples for the invariance check.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Simulated states used for the centroid of affine systems.
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Lift noisy systems in full vec coordinates.
        #[arg(long)]
        no_reduce: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored report against its system.
    Verify {
        report: PathBuf,
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Length of the containment simulation.
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        /// Defaults to 1% of the steps, at least 100.
        #[arg(long)]
        burn_in: Option<usize>,
        /// Pins the seed; a fresh one is drawn otherwise.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary points of a report's ellipsoid for plotting.
    EllipsePoints {
        report: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Simulate {
            config,
            steps,
            burn_in,
            covariances,
            seed,
            no_reduce,
            out,
        } => commands::simulate(&commands::SimulateArgs {
            config,
            steps,
            burn_in,
            covariances,
            seed,
            no_reduce,
            out,
            verbose,
        }),
        Command::Bound {
            config,
            samples,
            steps,
            seed,
            no_reduce,
            out,
        } => commands::bound(&commands::BoundArgs {
            config,
            samples,
            steps,
            seed,
            no_reduce,
            out,
            verbose,
        }),
        Command::Verify {
            report,
            config,
            samples,
            steps,
            burn_in,
            seed,
            out,
        } => commands::verify(&commands::VerifyArgs {
            report,
            config,
            samples,
            steps,
            burn_in,
            seed,
            out,
            verbose,
        }),
        Command::EllipsePoints {
            report,
            resolution,
            out,
        } => commands::ellipse_points(&report, resolution, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
