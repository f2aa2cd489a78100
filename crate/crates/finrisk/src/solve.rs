use fedsink_core::container::Container;
use fedsink_core::{gibbs_kernel, transport_plan, Problem, Verdict};
use fedsink_fed::{run, run_centralized, Backend, FedParams, TraceSpec};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use crate::prep::{combined_cost, ground_cost, loss_vector, shift_normalize, Shifted};
use crate::spec::{RiskSpec, SourceMarginal};
use crate::RiskError;

/// Inner solver used for every λ.
#[derive(Debug, Clone, Default)]
pub enum Driver {
    #[default]
    Centralized,
    /// Client count and topology come from `params`; its stop policy is
    /// replaced by the spec's inner policy.
    Federated { params: FedParams, backend: Backend },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskResult {
    pub lambda_star: f64,
    #[serde(rename = "P_star")]
    pub p_star: Vec<Vec<f64>>,
    /// Reported with a negative sign: `−Σ P*_ij l_j`.
    pub rho_worst: f64,
    /// `Σ P*_ij l_j`.
    pub rho_raw: f64,
    pub transport_cost: f64,
    /// `λ* δ + Σ_i a_i max_j (l_j − λ* c_ij)`.
    pub dual_value: f64,
    pub iterations_outer: u32,
    pub inner_verdict: Verdict,
    pub inner_iterations: u64,
    pub k: f64,
    pub x_tilde: Vec<f64>,
    pub x_tilde_prime: Vec<f64>,
    /// Combined cost at `lambda_star`.
    pub cost: Vec<Vec<f64>>,
    pub loss: Vec<f64>,
}

impl RiskResult {
    pub fn plan(&self) -> Array2<f64> {
        to_array(&self.p_star)
    }

    /// `P*` as a binary container with the scalar results in the header.
    pub fn plan_container(&self) -> Container {
        let mut meta = Map::new();
        meta.insert("kind".into(), json!("risk_plan"));
        meta.insert("lambda_star".into(), json!(self.lambda_star));
        meta.insert("rho_worst".into(), json!(self.rho_worst));
        meta.insert("transport_cost".into(), json!(self.transport_cost));
        let mut c = Container::new(meta);
        c.push("P_star", self.plan().view());
        c.push("C", to_array(&self.cost).view());
        c
    }
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((n, m), |(i, j)| rows[i][j])
}

struct Evaluation {
    lambda: f64,
    plan: Array2<f64>,
    cost: Array2<f64>,
    transport: f64,
    verdict: Verdict,
    iterations: u64,
}

struct Context<'a> {
    spec: &'a RiskSpec,
    driver: &'a Driver,
    shifted: Shifted,
    source: Array1<f64>,
    target: Array1<f64>,
    ground: Array2<f64>,
}

impl Context<'_> {
    fn evaluate(&self, lambda: f64) -> Result<Evaluation, RiskError> {
        let s = &self.shifted;
        let mode = self.spec.options.cost_mode;
        let cost = combined_cost(mode, lambda, &s.x_tilde, &s.x_tilde_prime, &self.spec.w);
        // the solver needs nonnegative costs; a constant shift leaves the plan unchanged
        let floor = cost.iter().cloned().fold(0.0, f64::min);
        let solver_cost = cost.mapv(|c| c - floor);
        let problem = Problem::single(solver_cost, self.source.clone(), self.target.clone(), self.spec.epsilon)?;
        let stop = self.spec.options.inner;
        let outcome = match self.driver {
            Driver::Centralized => run_centralized(&problem, &stop, TraceSpec::off())?,
            Driver::Federated { params, backend } => {
                let params = params.clone().with_stop(stop).with_trace(TraceSpec::off());
                run(&problem, &params, backend)?
            }
        };
        let kernel = gibbs_kernel(problem.cost().view(), problem.epsilon())?;
        let plan = transport_plan(&outcome.state, &kernel, 0);
        let transport = (&plan * &self.ground).sum();
        Ok(Evaluation {
            lambda,
            plan,
            cost,
            transport,
            verdict: outcome.report.verdict,
            iterations: outcome.report.iterations,
        })
    }

    fn met(&self, e: &Evaluation) -> bool {
        (e.transport - self.spec.delta).abs() <= self.spec.options.outer_tolerance * self.spec.delta
    }
}

/// Solves for the worst-case expected loss. With `options.search` off the
/// plan is computed at `lambda0` only.
pub fn solve_worst_case(spec: &RiskSpec, driver: &Driver) -> Result<RiskResult, RiskError> {
    spec.validate()?;
    let shifted = shift_normalize(&spec.x, &spec.x_prime, spec.shift_eps)?;
    let n = spec.n();
    let source = match spec.options.source {
        SourceMarginal::Uniform => Array1::from_elem(n, 1.0 / n as f64),
        SourceMarginal::Shifted => Array1::from(shifted.x_tilde.clone()),
    };
    let ctx = Context {
        spec,
        driver,
        target: Array1::from(shifted.x_tilde_prime.clone()),
        ground: ground_cost(&shifted.x_tilde, &shifted.x_tilde_prime),
        source,
        shifted,
    };
    let (best, outer) = if spec.options.search { search(&ctx)? } else { (ctx.evaluate(spec.lambda0)?, 1) };
    Ok(finish(&ctx, best, outer))
}

/// Bracketing bisection on the decreasing map `λ ↦ T(λ)`.
fn search(ctx: &Context<'_>) -> Result<(Evaluation, u32), RiskError> {
    let spec = ctx.spec;
    let o = &spec.options;
    let delta = spec.delta;
    let mut count = 1;
    let first = ctx.evaluate(spec.lambda0)?;
    if ctx.met(&first) {
        return Ok((first, count));
    }
    let (mut lo, mut hi) = if first.transport > delta {
        let mut lo = first;
        let mut step = spec.lambda0.max(1.0);
        loop {
            let lambda = (lo.lambda + step).min(o.lambda_max);
            count += 1;
            let e = ctx.evaluate(lambda)?;
            if ctx.met(&e) {
                return Ok((e, count));
            }
            if e.transport < delta {
                break (lo, e);
            }
            if lambda >= o.lambda_max {
                return Err(RiskError::BracketNotFound { lambda_max: o.lambda_max, transport: e.transport, delta });
            }
            lo = e;
            step *= 2.0;
        }
    } else {
        count += 1;
        let zero = ctx.evaluate(0.0)?;
        if ctx.met(&zero) {
            return Ok((zero, count));
        }
        if zero.transport < delta {
            return Err(RiskError::BracketNotFound { lambda_max: o.lambda_max, transport: zero.transport, delta });
        }
        (zero, first)
    };
    while count < o.outer_max_iterations {
        count += 1;
        let mid = ctx.evaluate(0.5 * (lo.lambda + hi.lambda))?;
        if ctx.met(&mid) {
            return Ok((mid, count));
        }
        if mid.transport > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let closest = if (lo.transport - delta).abs() < (hi.transport - delta).abs() { lo } else { hi };
    Err(RiskError::OuterBudget { iterations: count, lambda: closest.lambda, gap: closest.transport - delta })
}

fn finish(ctx: &Context<'_>, e: Evaluation, outer: u32) -> RiskResult {
    let s = &ctx.shifted;
    let spec = ctx.spec;
    let loss = loss_vector(spec.options.cost_mode, &spec.w, &s.x_tilde, &s.x_tilde_prime);
    let rho_raw: f64 = e.plan.outer_iter().map(|row| row.dot(&loss)).sum();
    let dual_value = e.lambda * spec.delta
        + ctx
            .source
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let h = (0..loss.len())
                    .map(|j| loss[j] - e.lambda * ctx.ground[[i, j]])
                    .fold(f64::NEG_INFINITY, f64::max);
                a * h
            })
            .sum::<f64>();
    RiskResult {
        lambda_star: e.lambda,
        p_star: to_rows(&e.plan),
        rho_worst: -rho_raw,
        rho_raw,
        transport_cost: e.transport,
        dual_value,
        iterations_outer: outer,
        inner_verdict: e.verdict,
        inner_iterations: e.iterations,
        k: s.k,
        x_tilde: s.x_tilde.clone(),
        x_tilde_prime: s.x_tilde_prime.clone(),
        cost: to_rows(&e.cost),
        loss: loss.to_vec(),
    }
}

/// `|ρ − (λ*δ + Σ P* l − λ*⟨P*, c⟩)|`, which equals `λ* |⟨P*, c⟩ − δ|` up to rounding.
pub fn dual_check(result: &RiskResult, spec: &RiskSpec) -> f64 {
    let plan = result.plan();
    let ground = ground_cost(&result.x_tilde, &result.x_tilde_prime);
    let mut expected_loss = 0.0;
    let mut transport = 0.0;
    for ((i, j), p) in plan.indexed_iter() {
        expected_loss += p * result.loss[j];
        transport += p * ground[[i, j]];
    }
    let lambda = result.lambda_star;
    (result.rho_raw - (lambda * spec.delta + expected_loss - lambda * transport)).abs()
}
