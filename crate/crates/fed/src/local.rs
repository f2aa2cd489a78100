//! Per-client working state shared by the drivers.

use std::ops::Range;

use fedsink_core::kernel::{broadcast_source, column_residuals, worst_column};
use fedsink_core::{BlockView, Verdict};
use fedsink_net::FabricStats;
use ndarray::{s, Array2, ArrayView2};

use crate::report::TracePoint;

pub(crate) struct Local {
    pub rank: usize,
    pub range: Range<usize>,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub kernel_rows: Array2<f64>,
    pub kernel_cols_t: Array2<f64>,
    pub cost_rows: Array2<f64>,
    pub epsilon: f64,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl Local {
    pub fn new(view: BlockView<f64>) -> Self {
        let range = view.range();
        let targets = view.targets.ncols();
        Local {
            rank: view.client_id,
            a: broadcast_source(view.source.view(), targets),
            b: view.targets,
            kernel_rows: view.kernel_rows,
            kernel_cols_t: view.kernel_cols_t,
            cost_rows: view.cost_rows,
            epsilon: view.epsilon,
            u: view.u,
            v: view.v,
            range,
        }
    }

    pub fn targets(&self) -> usize {
        self.u.ncols()
    }

    pub fn own_u(&self) -> ArrayView2<'_, f64> {
        self.u.slice(s![self.range.clone(), ..])
    }

    pub fn own_v(&self) -> ArrayView2<'_, f64> {
        self.v.slice(s![self.range.clone(), ..])
    }

    pub fn set_own_u(&mut self, block: &Array2<f64>) {
        self.u.slice_mut(s![self.range.clone(), ..]).assign(block);
    }

    pub fn set_own_v(&mut self, block: &Array2<f64>) {
        self.v.slice_mut(s![self.range.clone(), ..]).assign(block);
    }
}

pub(crate) fn flatten(block: ArrayView2<'_, f64>) -> Vec<f64> {
    block.iter().copied().collect()
}

/// Writes the row-major `m × N` payload into rows `[j·m, (j+1)·m)`.
pub(crate) fn write_block(full: &mut Array2<f64>, j: usize, payload: &[f64]) {
    let targets = full.ncols();
    let m = payload.len() / targets;
    let block = ArrayView2::from_shape((m, targets), payload).expect("payload is m × N");
    full.slice_mut(s![j * m..(j + 1) * m, ..]).assign(&block);
}

pub(crate) fn unflatten(payload: &[f64], targets: usize) -> Array2<f64> {
    Array2::from_shape_vec((payload.len() / targets, targets), payload.to_vec()).expect("payload is m × N")
}

/// Per-column partial L1 residuals of one block: `[l1_a; l1_b]`.
pub(crate) fn residual_partials(
    u_own: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    v_own: ArrayView2<'_, f64>,
    r: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Vec<f64> {
    let ra = column_residuals(u_own, q, a);
    let rb = column_residuals(v_own, r, b);
    let mut out: Vec<f64> = ra.iter().map(|x| x.0).collect();
    out.extend(rb.iter().map(|x| x.0));
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Reduced {
    pub err_a: f64,
    pub err_b: f64,
}

/// Sums partials over blocks in rank order, then takes the worst column.
pub(crate) fn reduce_partials<'a>(blocks: impl IntoIterator<Item = &'a [f64]>, targets: usize) -> Reduced {
    let mut a = vec![(0.0, 0.0); targets];
    let mut b = vec![(0.0, 0.0); targets];
    for p in blocks {
        for t in 0..targets {
            a[t].0 += p[t];
            b[t].0 += p[targets + t];
        }
    }
    let (err_a, _) = worst_column(&a);
    let (err_b, _) = worst_column(&b);
    Reduced { err_a, err_b }
}

pub(crate) fn trace_point(iteration: u64, r: Reduced, objective: Option<f64>) -> TracePoint {
    TracePoint {
        iteration,
        err_a: r.err_a,
        err_b: r.err_b,
        objective,
    }
}

pub(crate) fn verdict_code(v: Option<Verdict>) -> f64 {
    match v {
        None => 0.0,
        Some(Verdict::Converged) => 1.0,
        Some(Verdict::MaxIterations) => 2.0,
        Some(Verdict::Timeout) => 3.0,
        Some(Verdict::Diverged) => 4.0,
    }
}

pub(crate) fn verdict_from_code(x: f64) -> Option<Verdict> {
    match x as u8 {
        1 => Some(Verdict::Converged),
        2 => Some(Verdict::MaxIterations),
        3 => Some(Verdict::Timeout),
        4 => Some(Verdict::Diverged),
        _ => None,
    }
}

/// What one worker hands back to the harness.
#[derive(Debug, Clone)]
pub struct ClientOutcome {
    pub rank: usize,
    pub iterations: u64,
    pub verdict: Option<Verdict>,
    /// Reconciled full scaling vectors, `n × N`.
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    /// Recorded by the arbiter only.
    pub trace: Vec<TracePoint>,
    pub busy_seconds: f64,
    pub stats: FabricStats,
}
