use fedsink_core::StopPolicy;
use serde::{Deserialize, Serialize};

use crate::RiskError;

pub const DEFAULT_SHIFT_EPS: f64 = 0.01;
pub const LAMBDA_MAX: f64 = 1e3;
pub const OUTER_TOLERANCE: f64 = 1e-6;
pub const OUTER_MAX_ITERATIONS: u32 = 100;

/// How the loss enters the combined cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// `C_ij = λ c_ij − l_j / n` with `l_j = w_j x̃'_j`.
    #[default]
    General,
    /// `C = λ (c + cᵀ)/2 + wᵀx̃ / n`, a constant loss offset on a symmetrized
    /// ground cost. Every entry carries the loss `wᵀx̃`.
    SymmetricOffset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMarginal {
    /// `a_i = 1/n`.
    #[default]
    Uniform,
    /// `a = x̃`.
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskOptions {
    pub cost_mode: CostMode,
    pub source: SourceMarginal,
    /// Search λ so that the transport cost meets δ; otherwise λ stays at `lambda0`.
    pub search: bool,
    pub inner: StopPolicy,
    pub lambda_max: f64,
    /// Relative tolerance on `|T(λ) − δ| / δ`.
    pub outer_tolerance: f64,
    pub outer_max_iterations: u32,
}

impl Default for RiskOptions {
    fn default() -> Self {
        RiskOptions {
            cost_mode: CostMode::General,
            source: SourceMarginal::Uniform,
            search: true,
            inner: StopPolicy::tight(),
            lambda_max: LAMBDA_MAX,
            outer_tolerance: OUTER_TOLERANCE,
            outer_max_iterations: OUTER_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSpec {
    /// Empirical returns, percent units.
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda0: f64,
    pub delta: f64,
    pub epsilon: f64,
    #[serde(default = "default_shift_eps")]
    pub shift_eps: f64,
    #[serde(default)]
    pub options: RiskOptions,
}

fn default_shift_eps() -> f64 {
    DEFAULT_SHIFT_EPS
}

impl RiskSpec {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let bad = |m: String| Err(RiskError::Spec(m));
        let n = self.x.len();
        if n == 0 || self.x_prime.len() != n || self.w.len() != n {
            return bad(format!(
                "x, x_prime and w must share a positive length (got {}, {}, {})",
                n,
                self.x_prime.len(),
                self.w.len()
            ));
        }
        if self.x.iter().chain(&self.x_prime).chain(&self.w).any(|v| !v.is_finite()) {
            return bad("x, x_prime and w must be finite".into());
        }
        let wsum: f64 = self.w.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {wsum}, expected 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad("delta must be positive".into());
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon must be positive".into());
        }
        if !(self.lambda0 >= 0.0) || !self.lambda0.is_finite() {
            return bad("lambda0 must be nonnegative".into());
        }
        if !(self.shift_eps > 0.0) {
            return bad("shift_eps must be positive".into());
        }
        let o = &self.options;
        if !(o.lambda_max > 0.0) || !(o.outer_tolerance > 0.0) || o.outer_max_iterations == 0 {
            return bad("lambda_max, outer_tolerance and outer_max_iterations must be positive".into());
        }
        o.inner.validate().map_err(RiskError::Spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_names_are_exact() {
        let json = r#"{"x":[1,2],"x_prime":[2,1],"w":[0.5,0.5],"lambda0":0.1,"delta":0.01,"epsilon":0.01}"#;
        let spec: RiskSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.shift_eps, DEFAULT_SHIFT_EPS);
        assert_eq!(spec.options, RiskOptions::default());
        spec.validate().unwrap();
        let typo = json.replace("x_prime", "xprime");
        assert!(serde_json::from_str::<RiskSpec>(&typo).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let base = RiskSpec {
            x: vec![1.0, 2.0],
            x_prime: vec![2.0, 1.0],
            w: vec![0.5, 0.5],
            lambda0: 0.1,
            delta: 0.01,
            epsilon: 0.01,
            shift_eps: 0.01,
            options: RiskOptions::default(),
        };
        base.validate().unwrap();
        for broken in [
            RiskSpec { w: vec![0.5, 0.6], ..base.clone() },
            RiskSpec { delta: 0.0, ..base.clone() },
            RiskSpec { epsilon: -1.0, ..base.clone() },
            RiskSpec { x_prime: vec![1.0], ..base.clone() },
        ] {
            assert!(broken.validate().is_err());
        }
    }
}
