use ndarray::{Array1, Array2, Axis};

use crate::error::OtError;
use crate::scalar::Scalar;

/// An entropic transport instance: cost `C`, source marginal `a`, a matrix
/// of target marginals `B` (one histogram per column) and the regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    cost: Array2<T>,
    source: Array1<T>,
    targets: Array2<T>,
    epsilon: T,
}

impl<T: Scalar> Problem<T> {
    pub fn new(cost: Array2<T>, source: Array1<T>, targets: Array2<T>, epsilon: T) -> Result<Self, OtError> {
        let n = source.len();
        if n == 0 {
            return Err(OtError::DimensionMismatch("empty source marginal".into()));
        }
        if cost.dim() != (n, n) {
            return Err(OtError::DimensionMismatch(format!(
                "cost is {:?}, expected ({n}, {n})",
                cost.dim()
            )));
        }
        if targets.nrows() != n || targets.ncols() == 0 {
            return Err(OtError::DimensionMismatch(format!(
                "targets are {:?}, expected ({n}, N>=1)",
                targets.dim()
            )));
        }
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(OtError::NonPositiveEpsilon);
        }
        if let Some(((row, col), _)) = cost
            .indexed_iter()
            .find(|(_, c)| !c.is_finite() || **c < T::zero())
        {
            return Err(OtError::NonFiniteCost { row, col });
        }
        let bad = |x: &T| !x.is_finite() || *x < T::zero();
        if source.iter().any(bad) || targets.iter().any(bad) {
            return Err(OtError::InvalidMarginal("entries must be finite and nonnegative".into()));
        }
        let mass = source.iter().fold(0.0, |s, x| s + x.to_f64());
        if mass <= 0.0 {
            return Err(OtError::InvalidMarginal("source marginal has no mass".into()));
        }
        let tol = 1e-12_f64.max(n as f64 * T::epsilon().to_f64());
        for (t, col) in targets.axis_iter(Axis(1)).enumerate() {
            let col_mass = col.iter().fold(0.0, |s, x| s + x.to_f64());
            if (col_mass - mass).abs() > tol * mass {
                return Err(OtError::InvalidMarginal(format!(
                    "target {t} has mass {col_mass}, source has {mass}"
                )));
            }
        }
        Ok(Problem { cost, source, targets, epsilon })
    }

    /// Single-target convenience constructor.
    pub fn single(cost: Array2<T>, source: Array1<T>, target: Array1<T>, epsilon: T) -> Result<Self, OtError> {
        let n = target.len();
        let targets = target
            .into_shape_with_order((n, 1))
            .map_err(|e| OtError::DimensionMismatch(e.to_string()))?;
        Problem::new(cost, source, targets, epsilon)
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.ncols()
    }

    pub fn cost(&self) -> &Array2<T> {
        &self.cost
    }

    pub fn source(&self) -> &Array1<T> {
        &self.source
    }

    pub fn targets(&self) -> &Array2<T> {
        &self.targets
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Same marginals with a single target column `t`.
    pub fn target_column(&self, t: usize) -> Problem<T> {
        let col = self.targets.column(t).to_owned();
        let n = col.len();
        Problem {
            cost: self.cost.clone(),
            source: self.source.clone(),
            targets: col.into_shape_with_order((n, 1)).expect("column reshape"),
            epsilon: self.epsilon,
        }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Problem<U> {
        let f = |x: &T| U::from_f64(x.to_f64());
        Problem {
            cost: self.cost.map(f),
            source: self.source.map(f),
            targets: self.targets.map(f),
            epsilon: U::from_f64(self.epsilon.to_f64()),
        }
    }
}

/// Scaling factors `u`, `v` (each `n × N`) after `iteration` full sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState<T> {
    pub u: Array2<T>,
    pub v: Array2<T>,
    pub iteration: u64,
}

impl<T: Scalar> ScalingState<T> {
    /// All-ones initialization.
    pub fn ones(n: usize, targets: usize) -> Self {
        ScalingState {
            u: Array2::from_elem((n, targets), T::one()),
            v: Array2::from_elem((n, targets), T::one()),
            iteration: 0,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite() && *x > T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_instances() {
        let c = Array2::<f64>::zeros((2, 2));
        let a = array![0.5, 0.5];
        assert_eq!(
            Problem::single(c.clone(), a.clone(), array![0.5, 0.5], 0.0).unwrap_err(),
            OtError::NonPositiveEpsilon
        );
        let mut bad = c.clone();
        bad[[1, 0]] = f64::NAN;
        assert_eq!(
            Problem::single(bad, a.clone(), array![0.5, 0.5], 1.0).unwrap_err(),
            OtError::NonFiniteCost { row: 1, col: 0 }
        );
        assert!(matches!(
            Problem::single(c.clone(), a.clone(), array![0.5, 0.6], 1.0),
            Err(OtError::InvalidMarginal(_))
        ));
        assert!(matches!(
            Problem::single(c, array![0.5, 0.5, 0.0], array![0.5, 0.5], 1.0),
            Err(OtError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn target_column_extracts_one_histogram() {
        let c = Array2::<f64>::zeros((2, 2));
        let b = array![[0.5, 0.9], [0.5, 0.1]];
        let p = Problem::new(c, array![0.5, 0.5], b, 1.0).unwrap();
        assert_eq!(p.num_targets(), 2);
        assert_eq!(p.target_column(1).targets().column(0).to_vec(), vec![0.9, 0.1]);
    }
}
