use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::sync::Arc;

use fedsink_core::container::Container;
use fedsink_core::synth::GenSpec;
use fedsink_core::{generate, StopPolicy, Verdict};
use fedsink_fed::{run, run_centralized, Backend, FedError, RunOutcome, RunReport};
use fedsink_finrisk::{dual_check, solve_worst_case, Driver, RiskError, RiskResult};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::plan::{Instance, Plan, RunPoint, Validated};
use crate::study::{epsilon_study, StudyRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCOMPLETE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

pub const CSV_COLUMNS: [&str; 20] = [
    "mode",
    "n",
    "N",
    "s",
    "cond_class",
    "c",
    "w",
    "alpha",
    "threshold",
    "timeout",
    "verdict",
    "iterations",
    "total_s",
    "compute_s",
    "comm_s",
    "tau_max",
    "tau_mean",
    "tau_std",
    "err_a_final",
    "objective_final",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Backend(_) | RunError::Output(_) => EXIT_BACKEND,
        }
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Output(io::Error::other(e))
    }
}

fn from_fed(e: FedError) -> RunError {
    match e {
        FedError::Params(m) => RunError::Config(ConfigError::new(m)),
        other => RunError::Backend(other.to_string()),
    }
}

/// Exit status of one verdict. A run with a negative threshold asks for a
/// fixed budget, so reaching it counts as success.
pub fn verdict_exit(verdict: Verdict, stop: &StopPolicy) -> i32 {
    match verdict {
        Verdict::Converged => EXIT_OK,
        Verdict::MaxIterations if stop.threshold < 0.0 => EXIT_OK,
        Verdict::MaxIterations | Verdict::Timeout => EXIT_INCOMPLETE,
        Verdict::Diverged => EXIT_DIVERGED,
    }
}

/// One line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub targets: usize,
    pub s: Option<f64>,
    pub cond_class: Option<String>,
    pub c: usize,
    pub w: u64,
    pub alpha: Option<f64>,
    pub threshold: f64,
    pub timeout: Option<f64>,
    pub verdict: Verdict,
    pub iterations: u64,
    pub total_s: f64,
    /// Mean over participants.
    pub compute_s: f64,
    pub comm_s: f64,
    pub tau_max: Option<u64>,
    pub tau_mean: Option<f64>,
    pub tau_std: Option<f64>,
    pub err_a_final: f64,
    pub objective_final: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl SummaryRow {
    pub fn new(point: &RunPoint, report: &RunReport) -> Self {
        let spec = point.instance.gen_spec();
        let tau = report.tau.overall;
        let has_tau = tau.count > 0;
        let (total_s, compute_s, comm_s) = match &report.timings {
            Some(t) => (t.total_s, mean(&t.compute_s), mean(&t.comm_s)),
            None => (0.0, 0.0, 0.0),
        };
        SummaryRow {
            mode: point.mode.as_str().to_string(),
            n: report.n,
            targets: report.targets,
            s: spec.map(|g| g.sparsity),
            cond_class: spec.map(|g| g.cond_class.as_str().to_string()),
            c: report.c,
            w: point.fed.w,
            alpha: (point.mode == Mode::AsyncA2a).then_some(point.fed.alpha),
            threshold: report.stop.threshold,
            timeout: report.stop.timeout,
            verdict: report.verdict,
            iterations: report.iterations,
            total_s,
            compute_s,
            comm_s,
            tau_max: has_tau.then_some(tau.max),
            tau_mean: has_tau.then_some(tau.mean),
            tau_std: has_tau.then_some(tau.std),
            err_a_final: report.err_a,
            objective_final: report.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    #[serde(flatten)]
    pub result: RiskResult,
    pub dual_residual: f64,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Runs(Vec<(RunReport, SummaryRow)>),
    Risk(RiskReport),
    /// The λ search could not meet δ.
    RiskUnsolved(String),
    Study(Vec<StudyRow>),
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub outcome: Outcome,
    pub exit_code: i32,
}

/// JSONL goes to `out/runs.jsonl` (or stdout); tables go next to it.
struct Sink {
    jsonl: Box<dyn Write>,
    dir: Option<std::path::PathBuf>,
}

impl Sink {
    fn open(config: &ExperimentConfig, jsonl_name: &str) -> Result<Sink, RunError> {
        match &config.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let f = File::create(dir.join(jsonl_name))?;
                Ok(Sink { jsonl: Box::new(BufWriter::new(f)), dir: Some(dir.clone()) })
            }
            None => Ok(Sink { jsonl: Box::new(io::stdout()), dir: None }),
        }
    }

    fn line(&mut self, s: &str) -> Result<(), RunError> {
        writeln!(self.jsonl, "{s}")?;
        Ok(())
    }

    fn csv(&self, name: &str, auto_header: bool) -> Result<Option<csv::Writer<File>>, RunError> {
        match &self.dir {
            Some(d) => Ok(Some(csv::WriterBuilder::new().has_headers(auto_header).from_path(d.join(name))?)),
            None => Ok(None),
        }
    }
}

pub fn run_once(point: &RunPoint, seed: u64, backend: &Backend) -> Result<RunOutcome, RunError> {
    let problem = match &point.instance {
        Instance::Generate(g) => {
            Arc::new(generate(&GenSpec { seed, ..g.clone() }).map_err(|e| ConfigError::new(e.to_string()))?)
        }
        Instance::Fixed { problem, .. } => problem.clone(),
    };
    let mut out = match point.mode.topology() {
        Some(t) => run(&problem, &point.fed.params(t, seed), backend).map_err(from_fed)?,
        None => run_centralized(&problem, &point.fed.stop, point.fed.trace).map_err(from_fed)?,
    };
    out.report.seed = seed;
    out.report.instance = Some(match &point.instance {
        Instance::Generate(g) => json!({ "generate": GenSpec { seed, ..g.clone() } }),
        Instance::Fixed { label, .. } => label.clone(),
    });
    Ok(out)
}

pub fn execute(v: &Validated) -> Result<Execution, RunError> {
    let config = &v.config;
    match &v.plan {
        Plan::Runs(points) => {
            let mut sink = Sink::open(config, "runs.jsonl")?;
            let mut csv = sink.csv("summary.csv", false)?;
            if let Some(w) = csv.as_mut() {
                w.write_record(CSV_COLUMNS)?;
            }
            let mut records = Vec::new();
            let mut exit_code = EXIT_OK;
            for point in points {
                for i in 0..config.repetitions {
                    let seed = config.seed.wrapping_add(i as u64);
                    let out = run_once(point, seed, &config.backend)?;
                    let report = out.report;
                    sink.line(&report.to_json_line(!config.record_timings))?;
                    let row = SummaryRow::new(point, &report);
                    if let Some(w) = csv.as_mut() {
                        w.serialize(&row)?;
                        w.flush()?;
                    }
                    exit_code = exit_code.max(verdict_exit(report.verdict, &report.stop));
                    records.push((report, row));
                }
            }
            sink.jsonl.flush()?;
            Ok(Execution { outcome: Outcome::Runs(records), exit_code })
        }
        Plan::Risk { spec, driver } => {
            let driver = match driver.topology() {
                Some(t) => Driver::Federated { params: config.fed.params(t, config.seed), backend: config.backend.clone() },
                None => Driver::Centralized,
            };
            let result = match solve_worst_case(spec, &driver) {
                Ok(r) => r,
                Err(e @ (RiskError::BracketNotFound { .. } | RiskError::OuterBudget { .. })) => {
                    return Ok(Execution { outcome: Outcome::RiskUnsolved(e.to_string()), exit_code: EXIT_INCOMPLETE });
                }
                Err(RiskError::Spec(m)) => return Err(ConfigError::new(m).into()),
                Err(RiskError::Inner(e)) => return Err(from_fed(e)),
                Err(e) => return Err(RunError::Backend(e.to_string())),
            };
            let report = RiskReport { dual_residual: dual_check(&result, spec), result };
            let mut sink = Sink::open(config, "risk.jsonl")?;
            sink.line(&serde_json::to_string(&report).expect("risk report serializes"))?;
            sink.jsonl.flush()?;
            if let Some(dir) = &sink.dir {
                let pretty = serde_json::to_string_pretty(&report).expect("risk report serializes");
                fs::write(dir.join("risk_result.json"), pretty + "\n")?;
                save(&report.result.plan_container(), &dir.join("risk_plan.fsk"))?;
            }
            let exit_code = verdict_exit(report.result.inner_verdict, &spec.options.inner);
            Ok(Execution { outcome: Outcome::Risk(report), exit_code })
        }
        Plan::EpsilonStudy { instance, study } => {
            let rows = epsilon_study(instance, study).map_err(ConfigError::new)?;
            let mut sink = Sink::open(config, "epsilon_study.jsonl")?;
            for r in &rows {
                sink.line(&serde_json::to_string(r).expect("row serializes"))?;
            }
            sink.jsonl.flush()?;
            if let Some(mut w) = sink.csv("epsilon_study.csv", true)? {
                for r in &rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            let exit_code = rows.iter().map(|r| verdict_exit(r.verdict, &study.stop)).max().unwrap_or(EXIT_OK);
            Ok(Execution { outcome: Outcome::Study(rows), exit_code })
        }
    }
}

fn save(c: &Container, path: &std::path::Path) -> Result<(), RunError> {
    c.save(path).map_err(|e| RunError::Output(io::Error::other(e)))
}
