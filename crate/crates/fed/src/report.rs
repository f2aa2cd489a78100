use fedsink_core::{ScalingState, StopPolicy, Verdict};
use fedsink_net::{FabricStats, Kind, TauAccumulator, TauSummary};
use serde::{Deserialize, Serialize};

use crate::params::FedParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub err_a: f64,
    pub err_b: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPair {
    pub receiver: usize,
    pub sender: usize,
    pub kind: Kind,
    #[serde(flatten)]
    pub summary: TauSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    /// Staleness of `U` and `V` blocks over all links.
    pub overall: TauSummary,
    pub pairs: Vec<TauPair>,
}

impl TauReport {
    pub fn from_stats<'a>(stats: impl IntoIterator<Item = (usize, &'a FabricStats)>) -> Self {
        let mut total = TauAccumulator::default();
        let mut pairs = Vec::new();
        for (receiver, s) in stats {
            for (&(sender, kind), acc) in &s.tau {
                if kind != Kind::S {
                    total.merge(acc);
                }
                pairs.push(TauPair {
                    receiver,
                    sender: sender as usize,
                    kind,
                    summary: acc.summary(),
                });
            }
        }
        TauReport { overall: total.summary(), pairs }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub sent: u64,
    pub received: u64,
    pub bytes_sent: u64,
    /// Mailbox envelopes handed to a reader.
    pub delivered: u64,
    pub coalesced: u64,
}

impl MessageCounts {
    pub fn from_stats<'a>(stats: impl IntoIterator<Item = &'a FabricStats>) -> Self {
        let mut c = MessageCounts::default();
        for s in stats {
            c.sent += s.messages_sent;
            c.received += s.messages_received;
            c.bytes_sent += s.bytes_sent;
            c.delivered += s.delivered;
            c.coalesced += s.coalesced;
        }
        c
    }
}

/// Wall-clock split, one entry per participant (the star server is last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    pub compute_s: Vec<f64>,
    pub comm_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub backend: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub targets: usize,
    pub c: usize,
    pub seed: u64,
    pub verdict: Verdict,
    /// Iterations completed by the arbiter.
    pub iterations: u64,
    pub iterations_per_client: Vec<u64>,
    pub err_a: f64,
    pub err_b: f64,
    pub signed_err_a: f64,
    pub objective: f64,
    pub trajectory: Vec<TracePoint>,
    pub tau: TauReport,
    pub messages: MessageCounts,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
    pub stop: StopPolicy,
    /// Federation parameters; absent for centralized runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub params: Option<FedParams>,
    /// Free-form description of the instance, filled in by callers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instance: Option<serde_json::Value>,
}

impl RunReport {
    /// One JSON line. Deterministic output omits wall-clock timings so that
    /// repeated simulator runs produce identical bytes.
    pub fn to_json_line(&self, deterministic: bool) -> String {
        let line = if deterministic && self.timings.is_some() {
            serde_json::to_string(&RunReport { timings: None, ..self.clone() })
        } else {
            serde_json::to_string(self)
        };
        line.expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Reconciled scaling state the run ended on.
    pub state: ScalingState<f64>,
}
