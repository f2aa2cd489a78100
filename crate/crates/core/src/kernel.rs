//! Gibbs kernel construction and the Sinkhorn half-steps.
//!
//! Every matrix-vector product goes through [`apply_rows`], which sums each
//! dot product in ascending column order. Centralized and block-partitioned
//! solvers therefore produce bit-identical iterates.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::OtError;
use crate::problem::ScalingState;
use crate::scalar::Scalar;

/// `K = exp(-C / epsilon)` with its transpose stored contiguously.
#[derive(Debug, Clone)]
pub struct GibbsKernel<T> {
    kernel: Array2<T>,
    kernel_t: Array2<T>,
    epsilon: T,
    cost_fingerprint: u64,
}

impl<T: Scalar> GibbsKernel<T> {
    pub fn matrix(&self) -> ArrayView2<'_, T> {
        self.kernel.view()
    }

    /// Rows of `K^T`, i.e. columns of `K`.
    pub fn transposed(&self) -> ArrayView2<'_, T> {
        self.kernel_t.view()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }

    /// FNV-1a digest of the cost matrix the kernel was built from.
    pub fn cost_fingerprint(&self) -> u64 {
        self.cost_fingerprint
    }
}

fn fingerprint<T: Scalar>(cost: &ArrayView2<'_, T>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in cost.iter() {
        for byte in x.to_f64().to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn gibbs_kernel<T: Scalar>(cost: ArrayView2<'_, T>, epsilon: T) -> Result<GibbsKernel<T>, OtError> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(OtError::NonPositiveEpsilon);
    }
    if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, c)| !c.is_finite() || **c < T::zero()) {
        return Err(OtError::NonFiniteCost { row, col });
    }
    let floor = T::kernel_floor();
    let kernel = cost.map(|&c| {
        let k = (-(c / epsilon)).exp();
        if k < floor {
            floor
        } else {
            k
        }
    });
    let kernel_t = kernel.t().as_standard_layout().into_owned();
    Ok(GibbsKernel { kernel, kernel_t, epsilon, cost_fingerprint: fingerprint(&cost) })
}

/// `rows · x` for an `m × n` row block and an `n × N` right-hand side.
///
/// Each dot product runs eight interleaved partial sums that are combined in
/// a fixed order, so the result depends only on the row and the vector, never
/// on how rows are blocked across callers.
pub fn apply_rows<T: Scalar>(rows: ArrayView2<'_, T>, x: ArrayView2<'_, T>) -> Array2<T> {
    assert_eq!(rows.ncols(), x.nrows(), "apply_rows: inner dimensions differ");
    let (m, targets) = (rows.nrows(), x.ncols());
    let xt = x.t().as_standard_layout().into_owned();
    let mut out = Array2::zeros((m, targets));
    for (i, row) in rows.outer_iter().enumerate() {
        let row = row.as_standard_layout();
        let row = row.as_slice().expect("standard layout");
        for (t, col) in xt.outer_iter().enumerate() {
            out[[i, t]] = dot(row, col.as_slice().expect("standard layout"));
        }
    }
    out
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let split = a.len() - a.len() % 8;
    for (ca, cb) in a[..split].chunks_exact(8).zip(b[..split].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    for (l, (x, y)) in a[split..].iter().zip(&b[split..]).enumerate() {
        acc[l] += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

/// `marginal ⊘ denom` with the underflow guard. Rows with zero mass map to zero.
pub fn divide_marginal<T: Scalar>(
    marginal: ArrayView2<'_, T>,
    denom: ArrayView2<'_, T>,
) -> Result<Array2<T>, OtError> {
    if marginal.dim() != denom.dim() {
        return Err(OtError::DimensionMismatch(format!(
            "marginal {:?} vs denominator {:?}",
            marginal.dim(),
            denom.dim()
        )));
    }
    let floor = T::kernel_floor();
    let mut out = Array2::zeros(marginal.dim());
    for ((idx, &num), &den) in marginal.indexed_iter().zip(denom.iter()) {
        if num == T::zero() {
            continue;
        }
        if !(den > floor) || !den.is_finite() {
            return Err(OtError::UnderflowDivide { row: idx.0, target: idx.1 });
        }
        out[idx] = num / den;
    }
    Ok(out)
}

/// Broadcasts a source slice over `targets` columns.
pub fn broadcast_source<T: Scalar>(a: ArrayView1<'_, T>, targets: usize) -> Array2<T> {
    a.insert_axis(Axis(1)).broadcast((a.len(), targets)).expect("broadcast").to_owned()
}

/// `q = K_rows v`, `u = a ⊘ q`.
pub fn half_step_u<T: Scalar>(
    kernel_rows: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    a: ArrayView1<'_, T>,
) -> Result<(Array2<T>, Array2<T>), OtError> {
    if kernel_rows.nrows() != a.len() {
        return Err(OtError::DimensionMismatch("kernel rows vs source slice".into()));
    }
    let q = apply_rows(kernel_rows, v);
    let u = divide_marginal(broadcast_source(a, v.ncols()).view(), q.view())?;
    Ok((q, u))
}

/// `r = K_cols^T u`, `v = b ⊘ r`. `kernel_cols_t` holds rows of `K^T`.
pub fn half_step_v<T: Scalar>(
    kernel_cols_t: ArrayView2<'_, T>,
    u: ArrayView2<'_, T>,
    b: ArrayView2<'_, T>,
) -> Result<(Array2<T>, Array2<T>), OtError> {
    if kernel_cols_t.nrows() != b.nrows() || u.ncols() != b.ncols() {
        return Err(OtError::DimensionMismatch("kernel columns vs target slice".into()));
    }
    let r = apply_rows(kernel_cols_t, u);
    let v = divide_marginal(b, r.view())?;
    Ok((r, v))
}

/// `alpha · new + (1 − alpha) · old`.
pub fn damped_combine<T: Scalar>(new: ArrayView2<'_, T>, old: ArrayView2<'_, T>, alpha: T) -> Array2<T> {
    assert_eq!(new.dim(), old.dim(), "damped_combine: shape mismatch");
    let keep = T::one() - alpha;
    Zip::from(new).and(old).map_collect(|&n, &o| alpha * n + keep * o)
}

/// `P = diag(u) K diag(v)` for one target column.
pub fn transport_plan<T: Scalar>(state: &ScalingState<T>, kernel: &GibbsKernel<T>, target: usize) -> Array2<T> {
    plan_from(state.u.column(target), kernel.matrix(), state.v.column(target))
}

pub fn plan_from<T: Scalar>(u: ArrayView1<'_, T>, kernel: ArrayView2<'_, T>, v: ArrayView1<'_, T>) -> Array2<T> {
    let mut p = kernel.to_owned();
    for ((i, j), x) in p.indexed_iter_mut() {
        *x = u[i] * *x * v[j];
    }
    p
}

/// Marginal residuals of a scaling state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalErrors<T> {
    /// `‖u ⊙ (K v) − a‖₁`, worst target column.
    pub err_a: T,
    /// `‖v ⊙ (K^T u) − b‖₁`, worst target column.
    pub err_b: T,
    /// `Σ_i ((P1)_i − a_i)` of the worst column; kept for comparison with signed-sum reporting.
    pub signed_a: T,
    pub signed_b: T,
}

/// Per target column, the L1 and signed sums of `scale ⊙ product − marginal`.
pub fn column_residuals<T: Scalar>(
    scale: ArrayView2<'_, T>,
    product: ArrayView2<'_, T>,
    marginal: ArrayView2<'_, T>,
) -> Vec<(T, T)> {
    (0..scale.ncols())
        .map(|t| {
            let mut l1 = T::zero();
            let mut signed = T::zero();
            for i in 0..scale.nrows() {
                let d = scale[[i, t]] * product[[i, t]] - marginal[[i, t]];
                l1 += d.abs();
                signed += d;
            }
            (l1, signed)
        })
        .collect()
}

/// The column with the largest L1 residual; NaN counts as largest.
pub fn worst_column<T: Scalar>(cols: &[(T, T)]) -> (T, T) {
    let mut worst = (T::zero(), T::zero());
    for (t, &(l1, signed)) in cols.iter().enumerate() {
        if t == 0 || l1 > worst.0 || l1.is_nan() {
            worst = (l1, signed);
        }
    }
    worst
}

/// L1 and signed residuals of `scale ⊙ product` against `marginal`, worst column by L1.
pub fn residuals<T: Scalar>(
    scale: ArrayView2<'_, T>,
    product: ArrayView2<'_, T>,
    marginal: ArrayView2<'_, T>,
) -> (T, T) {
    worst_column(&column_residuals(scale, product, marginal))
}

pub fn marginal_errors<T: Scalar>(
    state: &ScalingState<T>,
    kernel: &GibbsKernel<T>,
    a: ArrayView1<'_, T>,
    b: ArrayView2<'_, T>,
) -> MarginalErrors<T> {
    let q = apply_rows(kernel.matrix(), state.v.view());
    let r = apply_rows(kernel.transposed(), state.u.view());
    let a2 = broadcast_source(a, b.ncols());
    let (err_a, signed_a) = residuals(state.u.view(), q.view(), a2.view());
    let (err_b, signed_b) = residuals(state.v.view(), r.view(), b);
    MarginalErrors { err_a, err_b, signed_a, signed_b }
}

/// `⟨P, C⟩ + ε Σ P (log P − 1)` with `0 · log 0 = 0`.
/// Neumaier compensated sum. Its result barely depends on how the terms are
/// grouped, which keeps block-wise and whole-matrix objectives in agreement.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Default for CompensatedSum<T> {
    fn default() -> Self {
        CompensatedSum { sum: T::zero(), carry: T::zero() }
    }
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn objective<T: Scalar>(plan: ArrayView2<'_, T>, cost: ArrayView2<'_, T>, epsilon: T) -> T {
    let mut acc = CompensatedSum::default();
    for (&p, &c) in plan.iter().zip(cost.iter()) {
        if p > T::zero() {
            acc.add(p * c + epsilon * p * (p.ln() - T::one()));
        }
    }
    acc.value()
}

/// Objective contribution of the rows `u_rows` covers, summed over target
/// columns. `kernel_rows` and `cost_rows` are the matching row blocks, `v` is
/// the full column scaling.
pub fn block_objective<T: Scalar>(
    u_rows: ArrayView2<'_, T>,
    kernel_rows: ArrayView2<'_, T>,
    v: ArrayView2<'_, T>,
    cost_rows: ArrayView2<'_, T>,
    epsilon: T,
) -> T {
    (0..u_rows.ncols())
        .map(|t| objective(plan_from(u_rows.column(t), kernel_rows, v.column(t)).view(), cost_rows, epsilon))
        .collect::<CompensatedSum<T>>()
        .value()
}
