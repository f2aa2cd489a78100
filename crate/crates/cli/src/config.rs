use std::fmt;
use std::path::PathBuf;

use fedsink_core::synth::{CondClass, GenSpec};
use fedsink_core::StopPolicy;
use fedsink_fed::{Backend, FedParams, Topology, TraceSpec, DEFAULT_ALPHA, DEFAULT_RECV_TIMEOUT_SECS};
use fedsink_finrisk::{RiskSpec, THREE_ASSET_EXAMPLE};
use fedsink_net::{DelayModel, DelaySchedule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    SyncA2a,
    AsyncA2a,
    Star,
    Finrisk,
    Sweep,
    EpsilonStudy,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::SyncA2a => "sync_a2a",
            Mode::AsyncA2a => "async_a2a",
            Mode::Star => "star",
            Mode::Finrisk => "finrisk",
            Mode::Sweep => "sweep",
            Mode::EpsilonStudy => "epsilon_study",
        }
    }

    /// Federated topology of a solver mode; `None` for everything else.
    pub fn topology(self) -> Option<Topology> {
        match self {
            Mode::SyncA2a => Some(Topology::AllToAllSync),
            Mode::AsyncA2a => Some(Topology::AllToAllAsync),
            Mode::Star => Some(Topology::StarSync),
            _ => None,
        }
    }

    pub fn is_solver(self) -> bool {
        matches!(self, Mode::Centralized | Mode::SyncA2a | Mode::AsyncA2a | Mode::Star)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown mode `{s}`"))
    }
}

pub const TOY_EPSILON: f64 = 0.01;

fn toy_epsilon() -> f64 {
    TOY_EPSILON
}

/// Where the transport instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    /// Synthetic instance. Its `seed` is replaced by the run seed.
    Generate(GenSpec),
    /// Instance container written by `instance_container`.
    Path(PathBuf),
    /// The 4×4 instance of the regularization study.
    Toy {
        #[serde(default = "toy_epsilon")]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedSettings {
    pub c: usize,
    pub w: u64,
    pub alpha: f64,
    pub stop: StopPolicy,
    pub delay: DelayModel,
    pub allow_undamped: bool,
    pub trace: TraceSpec,
    pub recv_timeout_secs: f64,
}

impl Default for FedSettings {
    fn default() -> Self {
        FedSettings {
            c: 1,
            w: 1,
            alpha: DEFAULT_ALPHA,
            stop: StopPolicy::default(),
            delay: DelayModel::Zero,
            allow_undamped: false,
            trace: TraceSpec::off(),
            recv_timeout_secs: DEFAULT_RECV_TIMEOUT_SECS,
        }
    }
}

impl FedSettings {
    pub fn params(&self, topology: Topology, seed: u64) -> FedParams {
        FedParams {
            topology,
            clients: self.c,
            w: self.w,
            alpha: self.alpha,
            stop: self.stop,
            delay: DelaySchedule { model: self.delay.clone(), seed },
            seed,
            allow_undamped: self.allow_undamped,
            trace: self.trace,
            recv_timeout_secs: self.recv_timeout_secs,
        }
    }
}

/// Axes of a grid sweep. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub modes: Vec<Mode>,
    pub n: Vec<usize>,
    #[serde(rename = "N")]
    pub targets: Vec<usize>,
    pub sparsity_s: Vec<f64>,
    pub cond_class: Vec<CondClass>,
    pub c: Vec<usize>,
    pub w: Vec<u64>,
    pub alpha: Vec<f64>,
    pub threshold: Vec<f64>,
    pub timeout: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskSource {
    Inline(RiskSpec),
    Path(PathBuf),
    ThreeAsset,
}

impl RiskSource {
    pub fn load(&self) -> Result<RiskSpec, String> {
        let text = match self {
            RiskSource::Inline(spec) => return Ok(spec.clone()),
            RiskSource::Path(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
            RiskSource::ThreeAsset => THREE_ASSET_EXAMPLE.to_string(),
        };
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// `f64` mantissa with an unbounded exponent; needed once `C/ε` exceeds ~700.
    #[default]
    Extended,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonStudySpec {
    pub epsilons: Vec<f64>,
    /// `I_min` is the first iteration whose objective is within this
    /// relative distance of the final objective.
    pub tolerance: f64,
    pub stop: StopPolicy,
    pub precision: Precision,
}

impl Default for EpsilonStudySpec {
    fn default() -> Self {
        EpsilonStudySpec {
            epsilons: vec![5e-3, 1e-3, 5e-4, 1e-4],
            tolerance: 1e-3,
            stop: StopPolicy::tight().with_max_iterations(400_000).with_divergence_iterations(u64::MAX),
            precision: Precision::Extended,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub instance: Option<InstanceSource>,
    #[serde(default)]
    pub fed: FedSettings,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Run `i` uses seed `seed + i` for the instance generator and the delay schedule.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Keep wall-clock timings in the JSONL records. They are always in the CSV.
    #[serde(default)]
    pub record_timings: bool,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub risk: Option<RiskSource>,
    #[serde(default = "centralized")]
    pub risk_driver: Mode,
    #[serde(default)]
    pub epsilon_study: Option<EpsilonStudySpec>,
}

fn one() -> usize {
    1
}

fn centralized() -> Mode {
    Mode::Centralized
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "config line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "config line {l}: {}", self.message),
            _ => write!(f, "config: {}", self.message),
        }
    }
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError { line: None, column: None, message: message.into() }
    }

    /// Attaches the line of the first occurrence of `"key"` in `source`.
    pub fn at_key(mut self, source: Option<&str>, key: &str) -> Self {
        if self.line.is_none() {
            let needle = format!("\"{key}\"");
            self.line = source.and_then(|s| s.lines().position(|l| l.contains(&needle)).map(|i| i + 1));
        }
        self
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // serde_json appends its own position; keep only the description
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        ConfigError { line: Some(e.line()), column: Some(e.column()), message }
    })
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub n: Option<usize>,
    pub c: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
    pub repetitions: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(m) = self.mode {
            config.mode = Some(m);
        }
        if let Some(n) = self.n {
            match &mut config.instance {
                Some(InstanceSource::Generate(g)) => g.n = n,
                None => config.instance = Some(InstanceSource::Generate(GenSpec::new(n, 0))),
                Some(_) => return Err(ConfigError::new("--n applies to generated instances only")),
            }
        }
        if let Some(c) = self.c {
            config.fed.c = c;
        }
        if let Some(a) = self.alpha {
            config.fed.alpha = a;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(b) = &self.backend {
            config.backend = match b.as_str() {
                "sim" => Backend::Sim,
                "tcp" => match &config.backend {
                    Backend::Tcp { peers } => Backend::Tcp { peers: peers.clone() },
                    Backend::Sim => Backend::Tcp { peers: Vec::new() },
                },
                other => return Err(ConfigError::new(format!("unknown backend `{other}` (expected sim or tcp)"))),
            };
        }
        if let Some(o) = &self.out {
            config.out = Some(o.clone());
        }
        if let Some(r) = self.repetitions {
            config.repetitions = r;
        }
        Ok(())
    }
}
