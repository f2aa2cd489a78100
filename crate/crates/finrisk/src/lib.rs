//! Worst-case expected loss of a portfolio over a Wasserstein ball around the
//! empirical return distribution.
//!
//! Returns are shifted to be positive and normalized to histograms, a
//! combined cost `λ c − l` is assembled, and the entropic transport problem
//! is solved with any Sinkhorn driver. An outer bisection on `λ` drives the
//! transport cost to the budget `δ`.

mod prep;
mod solve;
mod spec;

use fedsink_core::OtError;
use fedsink_fed::FedError;
use thiserror::Error;

pub use prep::{combined_cost, ground_cost, loss_vector, shift_normalize, Shifted};
pub use solve::{dual_check, solve_worst_case, Driver, RiskResult};
pub use spec::{
    CostMode, RiskOptions, RiskSpec, SourceMarginal, DEFAULT_SHIFT_EPS, LAMBDA_MAX, OUTER_MAX_ITERATIONS,
    OUTER_TOLERANCE,
};

/// Three-asset example: fixed `λ = 0.1`, symmetrized cost with a constant
/// loss offset, source `x̃`, and a 30-sweep inner budget.
pub const THREE_ASSET_EXAMPLE: &str = include_str!("../data/three_asset.json");

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid risk spec: {0}")]
    Spec(String),
    #[error("shifted vector sums to {0}")]
    DegenerateSum(f64),
    #[error("transport cost {transport} stays on one side of delta {delta} on [0, {lambda_max}]")]
    BracketNotFound { lambda_max: f64, transport: f64, delta: f64 },
    #[error("lambda search stopped after {iterations} solves at lambda {lambda} with gap {gap}")]
    OuterBudget { iterations: u32, lambda: f64, gap: f64 },
    #[error(transparent)]
    Numeric(#[from] OtError),
    #[error(transparent)]
    Inner(#[from] FedError),
}

pub fn parse_spec(json: &str) -> Result<RiskSpec, RiskError> {
    let spec: RiskSpec = serde_json::from_str(json).map_err(|e| RiskError::Spec(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}
