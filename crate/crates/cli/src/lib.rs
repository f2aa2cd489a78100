//! Experiment runner: reads a JSON config, runs solver repetitions, sweeps,
//! the regularization study or the portfolio-risk pipeline, and writes
//! JSONL records plus a summary CSV.
//!
//! Exit codes: 0 every run converged, 1 a run hit its timeout or iteration
//! cap, 2 a run diverged, 3 invalid configuration, 4 backend or output
//! failure.

mod config;
mod plan;
mod runner;
mod study;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::{
    parse_config, ConfigError, EpsilonStudySpec, ExperimentConfig, FedSettings, InstanceSource, Mode, Overrides,
    Precision, RiskSource, SweepSpec, TOY_EPSILON,
};
pub use plan::{resolve, toy_problem, validate, Instance, Plan, RunPoint, Validated};
pub use runner::{
    execute, run_once, verdict_exit, Execution, Outcome, RiskReport, RunError, SummaryRow, CSV_COLUMNS, EXIT_BACKEND,
    EXIT_CONFIG, EXIT_DIVERGED, EXIT_INCOMPLETE, EXIT_OK,
};
pub use study::{epsilon_study, i_min, objective_trajectory, with_epsilon, StudyRow};

#[derive(Debug, Parser)]
#[command(name = "fedsink", version, about = "Run federated Sinkhorn experiments")]
pub struct Cli {
    /// JSON experiment config
    pub config: Option<PathBuf>,
    /// centralized, sync_a2a, async_a2a, star, finrisk, sweep or epsilon_study
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Dimension of the generated instance
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of clients
    #[arg(long)]
    pub c: Option<usize>,
    /// Damping step of the asynchronous driver
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sim or tcp
    #[arg(long)]
    pub backend: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode,
            n: self.n,
            c: self.c,
            alpha: self.alpha,
            seed: self.seed,
            backend: self.backend.clone(),
            out: self.out.clone(),
            repetitions: self.repetitions,
        }
    }
}

/// Loads, overrides and validates a config.
pub fn prepare(cli: &Cli) -> Result<Validated, ConfigError> {
    let text = match &cli.config {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let mut config = match &text {
        Some(t) => parse_config(t)?,
        None => ExperimentConfig::default(),
    };
    cli.overrides().apply(&mut config)?;
    validate(config, text.as_deref())
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let validated = match prepare(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("fedsink: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&validated) {
        Ok(ex) => {
            if let Outcome::RiskUnsolved(m) = &ex.outcome {
                eprintln!("fedsink: {m}");
            }
            ex.exit_code
        }
        Err(e) => {
            eprintln!("fedsink: {e}");
            e.exit_code()
        }
    }
}
