//! Experiment runner for the prequantum field workbench.
//!
//! Exit codes: 0 = all checks passed, 1 = a verification failed,
//! 2 = input or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{EpsilonSpec, ExperimentConfig};

/// Command error with the exit code it maps to.
#[derive(Debug)]
pub enum CmdError {
    /// Malformed input, config, or file system trouble (exit 2).
    Input(String),
    /// A verification or feasibility failure (exit 1).
    Failure(String),
}

pub type CmdResult<T> = Result<T, CmdError>;

pub fn input_error(msg: String) -> CmdError {
    CmdError::Input(msg)
}

pub fn failure(msg: String) -> CmdError {
    CmdError::Failure(msg)
}

impl CmdError {
    /// Infeasible covariances and consistency violations are run failures;
    /// everything else is the caller handing us bad input.
    pub fn from_core(e: pcsft::Error) -> Self {
        match e {
            pcsft::Error::NotPositiveSemidefinite { .. }
            | pcsft::Error::InseparableBackground { .. }
            | pcsft::Error::InternalConsistency { .. } => CmdError::Failure(e.to_string()),
            _ => CmdError::Input(e.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CmdError::Input(_) => 2,
            CmdError::Failure(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Input(m) | CmdError::Failure(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pcsft",
    version,
    about = "Prequantum Gaussian field workbench: build covariances from bipartite states, \
             sample fields, and verify the quantum-classical correspondence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Experiment config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config sample count
    #[arg(long)]
    n: Option<usize>,
    /// Override the background strength: a number or "auto"
    #[arg(long)]
    epsilon: Option<String>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity-verification suite and emit reports
    Verify(RunOverrides),
    /// Decide entanglement of a state file via the PSD criterion
    EntangleTest {
        /// State file (JSON: { "dims": [n1, n2], "coeffs": [...] })
        #[arg(long)]
        state: PathBuf,
        /// PSD tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// Directory for the JSON report
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a field sample batch and export CSV plus metadata
    Sample(RunOverrides),
    /// Print the minimal background strength report for a state
    MinEps {
        #[arg(long)]
        state: PathBuf,
    },
    /// Tabulate calibration error and dispersion over an epsilon grid
    SweepEps {
        #[arg(long)]
        state: PathBuf,
        /// Comma-separated epsilon values, e.g. "0.25,0.5,1.0"
        #[arg(long)]
        grid: String,
        /// Samples per grid point
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the CSV output
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_overrides(overrides: &RunOverrides) -> CmdResult<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(&overrides.config)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(n) = overrides.n {
        config.n_samples = n;
    }
    if let Some(eps) = &overrides.epsilon {
        config.epsilon = if eps == "auto" {
            EpsilonSpec::Auto
        } else {
            let value: f64 = eps.parse().map_err(|_| {
                input_error(format!("--epsilon must be a number or \"auto\", got {eps}"))
            })?;
            EpsilonSpec::Fixed(value)
        };
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> CmdResult<i32> {
    match &cli.command {
        Command::Verify(overrides) => commands::cmd_verify(&apply_overrides(overrides)?),
        Command::EntangleTest { state, tol, out } => {
            let tol = commands::resolve_tol(*tol)?;
            commands::cmd_entangle_test(state, tol, out.as_deref())
        }
        Command::Sample(overrides) => commands::cmd_sample(&apply_overrides(overrides)?),
        Command::MinEps { state } => commands::cmd_min_eps(state),
        Command::SweepEps {
            state,
            grid,
            n,
            seed,
            out,
        } => commands::cmd_sweep_eps(state, grid, *n, *seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
