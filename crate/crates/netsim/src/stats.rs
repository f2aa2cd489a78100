use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelope::Kind;

/// Running moments of message ages on one `(sender, kind)` stream.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TauAccumulator {
    pub count: u64,
    pub sum: u64,
    pub sum_sq: u128,
    pub min: u64,
    pub max: u64,
}

impl TauAccumulator {
    pub fn record(&mut self, tau: u64) {
        if self.count == 0 || tau < self.min {
            self.min = tau;
        }
        self.max = self.max.max(tau);
        self.count += 1;
        self.sum += tau;
        self.sum_sq += (tau as u128) * (tau as u128);
    }

    pub fn merge(&mut self, other: &TauAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 || other.min < self.min {
            self.min = other.min;
        }
        self.max = self.max.max(other.max);
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sum as f64 / self.count as f64
    }

    /// Population standard deviation, from exact integer moments.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let n = self.count as u128;
        let s = self.sum as u128;
        let var_num = n * self.sum_sq - s * s;
        (var_num as f64).sqrt() / self.count as f64
    }

    pub fn summary(&self) -> TauSummary {
        TauSummary {
            count: self.count,
            min: self.min,
            max: self.max,
            mean: self.mean(),
            std: self.std(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub count: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub std: f64,
}

/// Per-endpoint counters. Timings live apart from the counters so that the
/// counters stay reproducible.
#[derive(Debug, Clone, Default)]
pub struct FabricStats {
    pub messages_sent: u64,
    pub messages_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Envelopes handed out by `drain_mailbox`.
    pub delivered: u64,
    /// Envelopes superseded in the mailbox before being read.
    pub coalesced: u64,
    /// Seconds spent inside blocking fabric calls.
    pub comm_seconds: f64,
    pub tau: BTreeMap<(u16, Kind), TauAccumulator>,
}

impl FabricStats {
    pub fn record_tau(&mut self, sender: u16, kind: Kind, tau: u64) {
        self.tau.entry((sender, kind)).or_default().record(tau);
        self.delivered += 1;
    }

    pub fn tau_total(&self) -> TauAccumulator {
        let mut acc = TauAccumulator::default();
        for t in self.tau.values() {
            acc.merge(t);
        }
        acc
    }

    pub fn tau_samples(&self) -> u64 {
        self.tau.values().map(|t| t.count).sum()
    }
}

pub(crate) fn payload_bytes(payload: &[f64]) -> u64 {
    (crate::frame::HEADER_LEN + 8 * payload.len()) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_spread() {
        let mut t = TauAccumulator::default();
        for _ in 0..1000 {
            t.record(3);
        }
        assert_eq!(t.mean(), 3.0);
        assert_eq!(t.std(), 0.0);
        assert_eq!((t.min, t.max), (3, 3));
    }

    #[test]
    fn moments() {
        let mut t = TauAccumulator::default();
        for x in [1, 2, 3] {
            t.record(x);
        }
        assert_eq!(t.mean(), 2.0);
        assert!((t.std() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let mut u = TauAccumulator::default();
        u.record(7);
        t.merge(&u);
        assert_eq!((t.count, t.min, t.max), (4, 1, 7));
    }
}
