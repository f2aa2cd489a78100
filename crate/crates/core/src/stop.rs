//! Convergence, timeout and divergence rules.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Loose convergence threshold on the source-marginal error.
pub const LOOSE_THRESHOLD: f64 = 1e-5;
/// Tight convergence threshold.
pub const TIGHT_THRESHOLD: f64 = 1e-12;
/// Wall-clock limit for the fast experiment series.
pub const FAST_TIMEOUT_SECS: f64 = 10.0;
/// Wall-clock limit for the slow experiment series.
pub const SLOW_TIMEOUT_SECS: f64 = 1200.0;
/// Runs still above threshold after this many iterations are divergent.
pub const DIVERGENCE_ITERATIONS: u64 = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    MaxIterations,
    Timeout,
    Diverged,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::MaxIterations => "max_iterations",
            Verdict::Timeout => "timeout",
            Verdict::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopPolicy {
    pub threshold: f64,
    pub max_iterations: u64,
    /// Seconds; `None` disables the wall-clock limit.
    pub timeout: Option<f64>,
    pub divergence_iterations: u64,
}

impl Default for StopPolicy {
    fn default() -> Self {
        StopPolicy {
            threshold: LOOSE_THRESHOLD,
            max_iterations: 100_000,
            timeout: None,
            divergence_iterations: DIVERGENCE_ITERATIONS,
        }
    }
}

impl StopPolicy {
    pub fn loose() -> Self {
        StopPolicy::default()
    }

    pub fn tight() -> Self {
        StopPolicy { threshold: TIGHT_THRESHOLD, ..StopPolicy::default() }
    }

    /// Fixed iteration budget with convergence and divergence detection
    /// switched off. A negative threshold is never met, not even by an exact
    /// zero residual.
    pub fn budget(max_iterations: u64) -> Self {
        StopPolicy {
            threshold: -1.0,
            max_iterations,
            timeout: None,
            divergence_iterations: u64::MAX,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_timeout(mut self, secs: f64) -> Self {
        self.timeout = Some(secs);
        self
    }

    pub fn with_max_iterations(mut self, n: u64) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_divergence_iterations(mut self, n: u64) -> Self {
        self.divergence_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.threshold.is_nan() {
            return Err("threshold must be a number".into());
        }
        if let Some(t) = self.timeout {
            if !(t > 0.0) {
                return Err("timeout must be positive".into());
            }
        }
        Ok(())
    }
}

/// Precedence: converged, then timeout, then diverged, then the iteration budget.
///
/// A non-finite error counts as divergence.
pub fn evaluate_stop(policy: &StopPolicy, err_a: f64, iteration: u64, elapsed: Duration) -> Option<Verdict> {
    if err_a <= policy.threshold {
        return Some(Verdict::Converged);
    }
    if let Some(limit) = policy.timeout {
        if elapsed.as_secs_f64() > limit {
            return Some(Verdict::Timeout);
        }
    }
    if !err_a.is_finite() || iteration >= policy.divergence_iterations {
        return Some(Verdict::Diverged);
    }
    if iteration >= policy.max_iterations {
        return Some(Verdict::MaxIterations);
    }
    None
}
