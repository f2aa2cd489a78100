use std::fmt;

use fedsink_core::StopPolicy;
use fedsink_net::DelaySchedule;
use serde::{Deserialize, Serialize};

use crate::error::FedError;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_RECV_TIMEOUT_SECS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    AllToAllSync,
    AllToAllAsync,
    StarSync,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::AllToAllSync => "all_to_all_sync",
            Topology::AllToAllAsync => "all_to_all_async",
            Topology::StarSync => "star_sync",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which iterations the arbiter records in the report trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    /// Record every `every`-th evaluated iteration; 0 disables the trajectory.
    #[serde(default = "one")]
    pub every: u64,
    /// Also evaluate the regularized objective at recorded iterations.
    #[serde(default)]
    pub objective: bool,
}

fn one() -> u64 {
    1
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec { every: 1, objective: false }
    }
}

impl TraceSpec {
    pub fn off() -> Self {
        TraceSpec { every: 0, objective: false }
    }

    pub fn full() -> Self {
        TraceSpec { every: 1, objective: true }
    }

    pub fn wants(&self, iteration: u64) -> bool {
        self.every > 0 && iteration.is_multiple_of(self.every)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedParams {
    pub topology: Topology,
    #[serde(rename = "c")]
    pub clients: usize,
    #[serde(default = "one")]
    pub w: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub stop: StopPolicy,
    #[serde(default)]
    pub delay: DelaySchedule,
    #[serde(default)]
    pub seed: u64,
    /// Acknowledges that undamped asynchronous updates may be unstable.
    #[serde(default)]
    pub allow_undamped: bool,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default = "default_recv_timeout")]
    pub recv_timeout_secs: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_recv_timeout() -> f64 {
    DEFAULT_RECV_TIMEOUT_SECS
}

impl FedParams {
    pub fn new(topology: Topology, clients: usize) -> Self {
        FedParams {
            topology,
            clients,
            w: 1,
            alpha: DEFAULT_ALPHA,
            stop: StopPolicy::default(),
            delay: DelaySchedule::zero(),
            seed: 0,
            allow_undamped: false,
            trace: TraceSpec::default(),
            recv_timeout_secs: DEFAULT_RECV_TIMEOUT_SECS,
        }
    }

    pub fn with_stop(mut self, stop: StopPolicy) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_w(mut self, w: u64) -> Self {
        self.w = w;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_delay(mut self, delay: DelaySchedule) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_trace(mut self, trace: TraceSpec) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn undamped(mut self) -> Self {
        self.alpha = 1.0;
        self.allow_undamped = true;
        self
    }

    pub fn recv_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.recv_timeout_secs)
    }

    /// Checks the parameters against an instance of dimension `n`.
    pub fn validate(&self, n: usize) -> Result<(), FedError> {
        let bad = |m: String| Err(FedError::Params(m));
        if self.clients == 0 || !n.is_multiple_of(self.clients) {
            return bad(format!("client count {} must divide n = {n}", self.clients));
        }
        if self.w == 0 {
            return bad("communication frequency w must be at least 1".into());
        }
        if self.topology == Topology::StarSync && self.w != 1 {
            return bad("w is only defined for all-to-all topologies; star requires w = 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if self.topology == Topology::AllToAllAsync && self.alpha == 1.0 && !self.allow_undamped {
            return bad("alpha = 1 on the asynchronous topology requires allow_undamped".into());
        }
        if !(self.recv_timeout_secs > 0.0) || !self.recv_timeout_secs.is_finite() {
            return bad("recv_timeout_secs must be positive".into());
        }
        if self.topology == Topology::StarSync && self.clients + 1 > u16::MAX as usize {
            return bad("too many clients for the wire format".into());
        }
        self.stop.validate().map_err(FedError::Params)?;
        self.delay.validate(self.clients).map_err(FedError::Params)?;
        Ok(())
    }
}
