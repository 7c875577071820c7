//! Command-line front end for `coupling-rate`.
//!
//! Exit codes: `0` success, `2` bad input or usage, `3` numerical
//! cross-check failure.

pub mod commands;
pub mod input;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coupling_rate::bounds::{BoundsError, ReportOptions};
use coupling_rate::coupling::DEFAULT_MAX_STATES;
use coupling_rate::sim::SimError;
use coupling_rate::{ChainError, CouplingError, SpectralError, SpectralOptions};
use thiserror::Error;

use commands::{AnalyzeParams, NonhomParams, Output, RandomParams, SimulateParams};
use input::InputError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error("cannot serialize output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Bounds(BoundsError::DominationViolated { .. })
            | CliError::Bounds(BoundsError::Spectral(
                SpectralError::CrossCheckMismatch(_)
                | SpectralError::NoConvergence(_)
                | SpectralError::ResidualTooLarge { .. },
            )) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "coupling-rate", version, about = "Coupling-based convergence rates for finite Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rates and bound curves for one transition matrix.
    Analyze {
        path: PathBuf,
        #[arg(long, default_value_t = 3)]
        m_max: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        /// Echoed in the report; the analysis itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        /// Largest state count for which the pair operator is built.
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_n_guard: usize,
        /// Squarings in the Gelfand cross-check.
        #[arg(long)]
        gelfand_squarings: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo of the coupled pair against the exact non-coupling curve.
    Simulate {
        path: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X1", "X2"], default_values_t = [0, 1])]
        init: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_n_guard: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Bounds for a time-varying sequence of matrices.
    Nonhom {
        path: PathBuf,
        /// Treat the sequence as repeating (overrides the file).
        #[arg(long, overrides_with = "no_periodic")]
        periodic: bool,
        /// Unroll the sequence to explicit slices (overrides the file).
        #[arg(long, overrides_with = "periodic")]
        no_periodic: bool,
        #[arg(long, default_value_t = 3)]
        m_max: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        /// Homogeneous chain to fit as a perturbation base.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_n_guard: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Seeded ensemble of random ergodic chains.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Probability that an entry is forced to zero.
        #[arg(long, default_value_t = 0.0)]
        sparsity: f64,
        #[arg(long, default_value_t = 3)]
        m_max: usize,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
        max_n_guard: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
}

fn options(m_max: usize, n_max: usize, max_states: usize, spectral: SpectralOptions) -> ReportOptions {
    ReportOptions { m_max, n_max, max_states, spectral, ..ReportOptions::default() }
}

impl Command {
    pub fn out(&self) -> &OutputArgs {
        match self {
            Command::Analyze { out, .. }
            | Command::Simulate { out, .. }
            | Command::Nonhom { out, .. }
            | Command::Random { out, .. } => out,
        }
    }
}

/// Runs the command and returns its structured result.
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Analyze { path, m_max, n_max, seed, max_n_guard, gelfand_squarings, .. } => {
            let mut spectral = SpectralOptions::default();
            if let Some(g) = gelfand_squarings {
                spectral.gelfand_squarings = *g;
            }
            let params = AnalyzeParams { options: options(*m_max, *n_max, *max_n_guard, spectral), seed: *seed };
            commands::analyze(path, &params)
        }
        Command::Simulate { path, init, trials, horizon, seed, max_n_guard, .. } => {
            let params = SimulateParams {
                init: (init[0], init[1]),
                trials: *trials,
                horizon: *horizon,
                seed: *seed,
                max_states: *max_n_guard,
            };
            commands::simulate_cmd(path, &params)
        }
        Command::Nonhom { path, periodic, no_periodic, m_max, n_max, base, max_n_guard, .. } => {
            let periodic = match (periodic, no_periodic) {
                (_, true) => Some(false),
                (true, _) => Some(true),
                _ => None,
            };
            let params = NonhomParams {
                periodic,
                base: base.clone(),
                options: options(*m_max, *n_max, *max_n_guard, SpectralOptions::default()),
            };
            commands::nonhom(path, &params)
        }
        Command::Random { n, count, seed, sparsity, m_max, n_max, max_n_guard, .. } => {
            let params = RandomParams {
                states: *n,
                count: *count,
                seed: *seed,
                sparsity: *sparsity,
                options: options(*m_max, *n_max, *max_n_guard, SpectralOptions::default()),
            };
            commands::random(&params)
        }
    }
}

/// Runs the command and renders it; nothing is written unless it succeeds.
pub fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    let out = cli.command.out();
    let text = execute(cli)?.render(out.format)?;
    match &out.output {
        Some(path) => {
            std::fs::write(path, text)
                .map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
