//! Seeded synthetic instances along the benchmark axes: dimension, target
//! count, off-diagonal block sparsity and a conditioning class.
//!
//! All randomness comes from one SplitMix64 stream seeded with
//! `GenSpec::seed`, consumed in this order:
//!
//! 1. `n` draws for the source marginal,
//! 2. `n` draws per target column, column by column,
//! 3. `n²` draws for the base cost, row-major,
//! 4. one draw per entry lying in an off-diagonal block of the `c_hint × c_hint`
//!    grid, row-major.
//!
//! Marginal draws map `x` to `((x >> 11) + 1) · 2⁻⁵³ ∈ (0, 1]`; cost and
//! Bernoulli draws map to `(x >> 11) · 2⁻⁵³ ∈ [0, 1)`.

use ndarray::{Array1, Array2};
use rand::RngCore;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::Problem;

pub const PRNG_NAME: &str = "splitmix64";
pub const DEFAULT_EPSILON: f64 = 1.0;
/// Factor applied to the largest base cost for sparsified entries.
pub const SPARSE_COST_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CondClass {
    Well,
    Medium,
    Ill,
}

impl CondClass {
    /// Ratio between the largest and smallest row scale of the kernel.
    pub fn span(self) -> f64 {
        match self {
            CondClass::Well => 1.0,
            CondClass::Medium => 1e3,
            CondClass::Ill => 1e6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CondClass::Well => "well",
            CondClass::Medium => "medium",
            CondClass::Ill => "ill",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub n: usize,
    #[serde(rename = "N", default = "one")]
    pub targets: usize,
    #[serde(rename = "sparsity_s", default)]
    pub sparsity: f64,
    #[serde(default = "well")]
    pub cond_class: CondClass,
    #[serde(default = "one")]
    pub c_hint: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn one() -> usize {
    1
}
fn well() -> CondClass {
    CondClass::Well
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl GenSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        GenSpec {
            n,
            targets: 1,
            sparsity: 0.0,
            cond_class: CondClass::Well,
            c_hint: 1,
            seed,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("sparsity {0} outside [0, 1]")]
    Sparsity(f64),
    #[error("dimension and target count must be positive")]
    EmptyDimension,
    #[error("c_hint {c_hint} must be positive and divide n = {n}")]
    BlockGrid { n: usize, c_hint: usize },
    #[error("epsilon {0} must be positive and finite")]
    Epsilon(f64),
}

struct Stream(SplitMix64);

impl Stream {
    fn open_unit(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn half_open_unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn simplex(&mut self, n: usize) -> Array1<f64> {
        let raw: Array1<f64> = (0..n).map(|_| self.open_unit()).collect();
        let total = raw.sum();
        raw / total
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let n = self.n;
        if n == 0 || self.targets == 0 {
            return Err(GenError::EmptyDimension);
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(GenError::Sparsity(self.sparsity));
        }
        if self.c_hint == 0 || !n.is_multiple_of(self.c_hint) {
            return Err(GenError::BlockGrid { n, c_hint: self.c_hint });
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(GenError::Epsilon(self.epsilon));
        }
        Ok(())
    }
}

pub fn generate(spec: &GenSpec) -> Result<Problem<f64>, GenError> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = Stream(SplitMix64::seed_from_u64(spec.seed));

    let source = rng.simplex(n);
    let mut targets = Array2::zeros((n, spec.targets));
    for t in 0..spec.targets {
        targets.column_mut(t).assign(&rng.simplex(n));
    }

    let mut cost = Array2::from_shape_simple_fn((n, n), || rng.half_open_unit());
    let raised = SPARSE_COST_FACTOR * cost.iter().cloned().fold(0.0, f64::max);
    let m = n / spec.c_hint;
    for ((i, j), c) in cost.indexed_iter_mut() {
        if i / m != j / m && rng.half_open_unit() < spec.sparsity {
            *c = raised;
        }
    }

    // Row i of K is scaled by span^(-i/(n-1)), i.e. a row-constant cost shift.
    let span = spec.cond_class.span();
    if span > 1.0 && n > 1 {
        let step = spec.epsilon * span.ln() / (n - 1) as f64;
        for (i, mut row) in cost.outer_iter_mut().enumerate() {
            row += step * i as f64;
        }
    }

    Ok(Problem::new(cost, source, targets, spec.epsilon).expect("generated instance satisfies problem invariants"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gibbs_kernel;

    #[test]
    fn marginals_are_normalized_and_positive() {
        let mut spec = GenSpec::new(64, 7);
        spec.targets = 3;
        let p = generate(&spec).unwrap();
        assert!((p.source().sum() - 1.0).abs() < 1e-12);
        for col in p.targets().columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn zero_sparsity_leaves_uniform_costs() {
        let p = generate(&GenSpec::new(32, 1)).unwrap();
        assert!(p.cost().iter().all(|&c| (0.0..1.0).contains(&c)));
    }

    #[test]
    fn full_sparsity_raises_off_diagonal_blocks() {
        let spec = GenSpec { sparsity: 1.0, c_hint: 2, ..GenSpec::new(4, 3) };
        let p = generate(&spec).unwrap();
        let base = generate(&GenSpec { c_hint: 2, ..GenSpec::new(4, 3) }).unwrap();
        let raised = 10.0 * base.cost().iter().cloned().fold(0.0, f64::max);
        for i in 0..4 {
            for j in 0..4 {
                if i / 2 != j / 2 {
                    assert_eq!(p.cost()[[i, j]], raised);
                } else {
                    assert_eq!(p.cost()[[i, j]], base.cost()[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn condition_classes_span_the_kernel_rows() {
        for class in [CondClass::Well, CondClass::Medium, CondClass::Ill] {
            let spec = GenSpec { cond_class: class, ..GenSpec::new(16, 5) };
            let p = generate(&spec).unwrap();
            let base = generate(&GenSpec::new(16, 5)).unwrap();
            let k = gibbs_kernel(p.cost().view(), p.epsilon()).unwrap();
            let k0 = gibbs_kernel(base.cost().view(), base.epsilon()).unwrap();
            let ratio = k0.matrix()[[0, 0]] / k.matrix()[[0, 0]] * k.matrix()[[15, 0]] / k0.matrix()[[15, 0]];
            assert!((ratio * class.span() - 1.0).abs() < 1e-9, "{class:?}: {ratio}");
        }
    }

    #[test]
    fn rejects_out_of_domain() {
        assert_eq!(generate(&GenSpec { sparsity: 1.5, ..GenSpec::new(4, 0) }).unwrap_err(), GenError::Sparsity(1.5));
        assert!(matches!(generate(&GenSpec { c_hint: 3, ..GenSpec::new(4, 0) }), Err(GenError::BlockGrid { .. })));
        let bad: Result<GenSpec, _> = serde_json::from_str(r#"{"n": 4, "cond_class": "awful"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = GenSpec { sparsity: 0.5, c_hint: 4, cond_class: CondClass::Medium, ..GenSpec::new(40, 99) };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_ne!(generate(&spec).unwrap(), generate(&GenSpec { seed: 100, ..spec }).unwrap());
    }
}
