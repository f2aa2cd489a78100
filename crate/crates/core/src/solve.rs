//! Centralized Sinkhorn over all target columns at once.
//!
//! Iteration `k` applies one `u` half-step and one `v` half-step. The error
//! of state `k` is evaluated lazily: `u_k ⊙ (K v_k)` reuses the product
//! `K v_k` that iteration `k + 1` needs anyway, so checking convergence
//! costs no extra matrix product. The returned state is the one the stop
//! rule fired on.

use std::time::Instant;

use ndarray::ArrayView2;

use crate::error::OtError;
use crate::kernel::{
    apply_rows, broadcast_source, divide_marginal, gibbs_kernel, objective, plan_from, residuals, CompensatedSum, GibbsKernel,
};
use crate::problem::{Problem, ScalingState};
use crate::scalar::Scalar;
use crate::stop::{evaluate_stop, StopPolicy, Verdict};

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub state: ScalingState<T>,
    pub err_a: T,
    pub err_b: T,
    /// Signed sum of source residuals, worst column.
    pub signed_err_a: T,
    /// Regularized objective summed over target columns.
    pub objective: T,
    pub verdict: Verdict,
    pub iterations: u64,
}

/// What the observer sees after each evaluated iteration.
pub struct IterationRecord<'a, T> {
    pub iteration: u64,
    pub err_a: T,
    pub err_b: T,
    pub signed_err_a: T,
    pub state: &'a ScalingState<T>,
    pub kernel: &'a GibbsKernel<T>,
}

/// Objective summed over every target column of `state`.
pub fn total_objective<T: Scalar>(state: &ScalingState<T>, kernel: &GibbsKernel<T>, cost: ArrayView2<'_, T>) -> T {
    (0..state.u.ncols())
        .map(|t| {
            let p = plan_from(state.u.column(t), kernel.matrix(), state.v.column(t));
            objective(p.view(), cost, kernel.epsilon())
        })
        .collect::<CompensatedSum<T>>()
        .value()
}

pub fn solve_centralized<T: Scalar>(problem: &Problem<T>, stop: &StopPolicy) -> Result<SolveResult<T>, OtError> {
    solve_centralized_with(problem, stop, |_| {})
}

pub fn solve_centralized_with<T, F>(problem: &Problem<T>, stop: &StopPolicy, mut observe: F) -> Result<SolveResult<T>, OtError>
where
    T: Scalar,
    F: FnMut(&IterationRecord<'_, T>),
{
    let kernel = gibbs_kernel(problem.cost().view(), problem.epsilon())?;
    let (n, targets) = (problem.dim(), problem.num_targets());
    let source = broadcast_source(problem.source().view(), targets);
    let b = problem.targets().view();
    let started = Instant::now();

    let mut state = ScalingState::ones(n, targets);
    // r from the previous v half-step; the initial v = 1 has no error on b by convention
    let mut last_r = None;
    loop {
        let q = apply_rows(kernel.matrix(), state.v.view());
        let (err_a, signed_err_a) = residuals(state.u.view(), q.view(), source.view());
        let err_b = match &last_r {
            Some(r) => residuals(state.v.view(), ArrayView2::from(r), b).0,
            None => residuals(state.v.view(), apply_rows(kernel.transposed(), state.u.view()).view(), b).0,
        };
        observe(&IterationRecord {
            iteration: state.iteration,
            err_a,
            err_b,
            signed_err_a,
            state: &state,
            kernel: &kernel,
        });
        if let Some(verdict) = evaluate_stop(stop, err_a.to_f64(), state.iteration, started.elapsed()) {
            let objective = total_objective(&state, &kernel, problem.cost().view());
            return Ok(SolveResult {
                iterations: state.iteration,
                state,
                err_a,
                err_b,
                signed_err_a,
                objective,
                verdict,
            });
        }
        state.u = divide_marginal(source.view(), q.view())?;
        let r = apply_rows(kernel.transposed(), state.u.view());
        state.v = divide_marginal(b, r.view())?;
        last_r = Some(r);
        state.iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{marginal_errors, transport_plan};
    use crate::ExtFloat;
    use ndarray::{array, Array1, Array2};

    fn toy<T: Scalar>(eps: f64) -> Problem<T> {
        let c: Array2<f64> = array![[0., 1., 2., 3.], [1., 0., 3., 2.], [2., 3., 0., 1.], [3., 2., 1., 0.]];
        Problem::single(c, array![0.3, 0.2, 0.1, 0.4], array![0.2, 0.3, 0.3, 0.2], eps)
            .unwrap()
            .cast::<T>()
    }

    #[test]
    fn flat_kernel_converges_after_one_sweep() {
        let p = Problem::single(
            Array2::<f64>::zeros((4, 4)),
            array![0.3, 0.2, 0.1, 0.4],
            array![0.2, 0.3, 0.3, 0.2],
            1.0,
        )
        .unwrap();
        let res = solve_centralized(&p, &StopPolicy::tight()).unwrap();
        assert_eq!(res.verdict, Verdict::Converged);
        assert_eq!(res.iterations, 1);
        assert!(res.err_a < 1e-16 && res.err_b < 1e-16);
    }

    #[test]
    fn toy_converges_near_300_iterations_at_5e_3() {
        let res = solve_centralized(&toy::<f64>(5e-3), &StopPolicy::tight()).unwrap();
        assert_eq!(res.verdict, Verdict::Converged);
        assert!((225..=375).contains(&res.iterations), "{}", res.iterations);
    }

    #[test]
    fn toy_needs_about_1300_iterations_at_1e_3_in_ext64() {
        let res = solve_centralized(&toy::<ExtFloat>(1e-3), &StopPolicy::tight()).unwrap();
        assert_eq!(res.verdict, Verdict::Converged);
        assert!((975..=1625).contains(&res.iterations), "{}", res.iterations);
        assert!(res.err_a.to_f64() <= 1e-12);
    }

    #[test]
    fn symmetric_two_by_two_matches_closed_form() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        let p = Problem::single(c.clone(), array![0.5, 0.5], array![0.5, 0.5], 1.0).unwrap();
        let res = solve_centralized(&p, &StopPolicy::tight()).unwrap();
        // closed form: u = v = s with s²(1 + e⁻¹) = 1/2
        let e = (-1.0f64).exp();
        let diag = 0.5 / (1.0 + e);
        let off = diag * e;
        let want = 2.0 * off + 2.0 * diag * (diag.ln() - 1.0) + 2.0 * off * (off.ln() - 1.0);
        assert!((2.0 * off - 0.268942).abs() < 1e-6);
        assert!((res.objective - want).abs() < 1e-12, "{} vs {want}", res.objective);
    }

    #[test]
    fn mass_is_conserved_at_convergence() {
        let res = solve_centralized(&toy::<f64>(0.3), &StopPolicy::tight()).unwrap();
        let k = gibbs_kernel(toy::<f64>(0.3).cost().view(), 0.3).unwrap();
        let plan = transport_plan(&res.state, &k, 0);
        assert!((plan.sum() - 1.0).abs() < 1e-10);
        let e = marginal_errors(&res.state, &k, array![0.3, 0.2, 0.1, 0.4].view(), array![[0.2], [0.3], [0.3], [0.2]].view());
        assert!((e.err_a - res.err_a).abs() < 1e-15);
    }

    #[test]
    fn observer_sees_every_iteration() {
        let mut seen = Vec::new();
        let res = solve_centralized_with(&toy::<f64>(0.5), &StopPolicy::budget(7), |r| seen.push(r.iteration)).unwrap();
        assert_eq!(res.verdict, Verdict::MaxIterations);
        assert_eq!(seen, (0..=7).collect::<Vec<_>>());
    }

    #[test]
    fn runs_in_f32() {
        let res = solve_centralized(&toy::<f32>(0.5), &StopPolicy::loose()).unwrap();
        assert_eq!(res.verdict, Verdict::Converged);
        let res64 = solve_centralized(&toy::<f64>(0.5), &StopPolicy::loose()).unwrap();
        assert!((res.objective as f64 - res64.objective).abs() < 1e-4);
    }

    #[test]
    fn damping_leaves_fixed_point_fixed() {
        let p = toy::<f64>(0.5);
        let res = solve_centralized(&p, &StopPolicy::tight()).unwrap();
        let k = gibbs_kernel(p.cost().view(), 0.5).unwrap();
        let a = Array1::from(vec![0.3, 0.2, 0.1, 0.4]);
        let (_, u_new) = crate::kernel::half_step_u(k.matrix(), res.state.v.view(), a.view()).unwrap();
        for alpha in [0.1, 0.5, 0.9] {
            let damped = crate::kernel::damped_combine(u_new.view(), res.state.u.view(), alpha);
            for (x, y) in damped.iter().zip(res.state.u.iter()) {
                assert!(((x - y) / y).abs() < 1e-11);
            }
        }
    }
}
