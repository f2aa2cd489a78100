use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::spec::CostMode;
use crate::RiskError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shifted {
    pub x_tilde: Vec<f64>,
    pub x_tilde_prime: Vec<f64>,
    pub k: f64,
}

/// Shifts both vectors by `k = max(|min x|, |min x'|) + shift_eps` and
/// normalizes each to sum 1.
pub fn shift_normalize(x: &[f64], x_prime: &[f64], shift_eps: f64) -> Result<Shifted, RiskError> {
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = min(x).abs().max(min(x_prime).abs()) + shift_eps;
    let normalize = |v: &[f64]| {
        let shifted: Vec<f64> = v.iter().map(|t| t + k).collect();
        let total: f64 = shifted.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(RiskError::DegenerateSum(total));
        }
        Ok(shifted.into_iter().map(|t| t / total).collect())
    };
    Ok(Shifted { x_tilde: normalize(x)?, x_tilde_prime: normalize(x_prime)?, k })
}

/// Squared distance `c_ij = (x̃_i − x̃'_j)²`.
pub fn ground_cost(x_tilde: &[f64], x_tilde_prime: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((x_tilde.len(), x_tilde_prime.len()), |(i, j)| {
        (x_tilde[i] - x_tilde_prime[j]).powi(2)
    })
}

/// Loss attached to target point `j`.
pub fn loss_vector(mode: CostMode, w: &[f64], x_tilde: &[f64], x_tilde_prime: &[f64]) -> Array1<f64> {
    match mode {
        CostMode::General => w.iter().zip(x_tilde_prime).map(|(w, x)| w * x).collect(),
        CostMode::SymmetricOffset => {
            let portfolio: f64 = w.iter().zip(x_tilde).map(|(w, x)| w * x).sum();
            Array1::from_elem(x_tilde_prime.len(), portfolio)
        }
    }
}

pub fn combined_cost(
    mode: CostMode,
    lambda: f64,
    x_tilde: &[f64],
    x_tilde_prime: &[f64],
    w: &[f64],
) -> Array2<f64> {
    let n = x_tilde.len() as f64;
    let c = ground_cost(x_tilde, x_tilde_prime);
    let l = loss_vector(mode, w, x_tilde, x_tilde_prime);
    match mode {
        CostMode::General => Array2::from_shape_fn(c.dim(), |(i, j)| lambda * c[[i, j]] - l[j] / n),
        CostMode::SymmetricOffset => {
            Array2::from_shape_fn(c.dim(), |(i, j)| lambda * 0.5 * (c[[i, j]] + c[[j, i]]) + l[j] / n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 3] = [-0.51, -0.66, 4.34];
    const XP: [f64; 3] = [0.43, -0.8, 3.86];
    const W: [f64; 3] = [0.4, 0.1, 0.5];

    #[test]
    fn three_asset_shift() {
        let s = shift_normalize(&X, &XP, 0.01).unwrap();
        assert!((s.k - 0.81).abs() < 1e-12);
        let expect_x = [0.3 / 5.6, 0.15 / 5.6, 5.15 / 5.6];
        let expect_xp = [1.24 / 5.92, 0.01 / 5.92, 4.67 / 5.92];
        for i in 0..3 {
            assert!((s.x_tilde[i] - expect_x[i]).abs() < 1e-12);
            assert!((s.x_tilde_prime[i] - expect_xp[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rerun_is_deterministic() {
        let once = shift_normalize(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.01).unwrap();
        assert!((once.k - 1.01).abs() < 1e-15);
        let again = shift_normalize(&once.x_tilde, &once.x_tilde, 0.0).unwrap();
        let twice = shift_normalize(&once.x_tilde, &once.x_tilde, 0.0).unwrap();
        assert_eq!(again, twice);
    }

    #[test]
    fn single_nonzero_entry() {
        let s = shift_normalize(&[0.0, 0.0, 5.0], &[0.0, 0.0, 5.0], 1e-300).unwrap();
        assert_eq!(s.x_tilde[2], 1.0);
        assert!(s.x_tilde[..2].iter().all(|&t| t < 1e-299));
    }

    #[test]
    fn degenerate_sum() {
        assert!(matches!(shift_normalize(&[f64::NAN], &[1.0], 0.01), Err(RiskError::DegenerateSum(_))));
    }

    #[test]
    fn symmetric_offset_cost_matches_three_asset_table() {
        let s = shift_normalize(&X, &XP, 0.01).unwrap();
        let c = combined_cost(CostMode::SymmetricOffset, 0.1, &s.x_tilde, &s.x_tilde_prime, &W);
        let table = [[0.164, 0.163, 0.214], [0.163, 0.161, 0.232], [0.214, 0.232, 0.163]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[[i, j]] - table[i][j]).abs() < 5e-4, "({i}, {j}): {}", c[[i, j]]);
            }
        }
    }

    #[test]
    fn zero_lambda_and_zero_loss_give_zero_cost() {
        let c = combined_cost(CostMode::General, 0.0, &[0.2, 0.8], &[0.5, 0.5], &[0.0, 0.0]);
        assert!(c.iter().all(|&v| v == 0.0));
    }
}
