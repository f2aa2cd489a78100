//! Synchronous all-to-all: each client owns one row block of `u` and `v` and
//! keeps full-length copies that are refreshed by all-gathers on every
//! `w`-th iteration. Between refreshes clients iterate on stale foreign
//! blocks. Residual partials and the arbiter's clock are all-gathered, so
//! every client reaches the same stop decision on the same iteration.

use std::time::{Duration, Instant};

use fedsink_core::kernel::{apply_rows, block_objective, divide_marginal, CompensatedSum};
use fedsink_core::{evaluate_stop, BlockView};
use fedsink_net::{all_gather, all_gather_blocks, Endpoint, Kind};

use crate::error::{FedError, RankContext};
use crate::local::{flatten, reduce_partials, residual_partials, trace_point, ClientOutcome, Local};
use crate::params::FedParams;

pub(crate) const ARBITER: usize = 0;

/// Gathers everyone's own blocks so all clients hold the same full state.
pub(crate) fn reconcile<E: Endpoint + ?Sized>(ep: &mut E, local: &mut Local, iteration: u64) -> Result<(), FedError> {
    let rank = local.rank;
    let u = all_gather(ep, Kind::U, iteration, &flatten(local.own_u())).at(rank)?;
    let v = all_gather(ep, Kind::V, iteration, &flatten(local.own_v())).at(rank)?;
    let shape = local.u.dim();
    local.u = ndarray::Array2::from_shape_vec(shape, u).expect("gathered u is n × N");
    local.v = ndarray::Array2::from_shape_vec(shape, v).expect("gathered v is n × N");
    Ok(())
}

pub fn sync_all_to_all_client<E: Endpoint + ?Sized>(
    view: BlockView<f64>,
    ep: &mut E,
    params: &FedParams,
) -> Result<ClientOutcome, FedError> {
    let started = Instant::now();
    let mut local = Local::new(view);
    let rank = local.rank;
    let targets = local.targets();
    let mut trace = Vec::new();
    let mut r_last = apply_rows(local.kernel_cols_t.view(), local.u.view());
    let mut k: u64 = 0;
    let verdict = loop {
        let comm = (k + 1).is_multiple_of(params.w);
        if comm {
            let v = all_gather(ep, Kind::V, k, &flatten(local.own_v())).at(rank)?;
            local.v = ndarray::Array2::from_shape_vec(local.v.dim(), v).expect("gathered v is n × N");
        }
        let q = apply_rows(local.kernel_rows.view(), local.v.view());
        if comm {
            let want_obj = params.trace.objective && params.trace.wants(k);
            let mut partial =
                residual_partials(local.own_u(), q.view(), local.a.view(), local.own_v(), r_last.view(), local.b.view());
            partial.push(if want_obj {
                block_objective(local.own_u(), local.kernel_rows.view(), local.v.view(), local.cost_rows.view(), local.epsilon)
            } else {
                f64::NAN
            });
            partial.push(started.elapsed().as_secs_f64());
            let slots = partial.len();
            let blocks = all_gather_blocks(ep, Kind::S, k, &partial).at(rank)?;
            let reduced = reduce_partials(blocks.iter().map(|b| &b[..]), targets);
            let elapsed = Duration::from_secs_f64(blocks[ARBITER][slots - 1]);
            let decision = evaluate_stop(&params.stop, reduced.err_a, k, elapsed);
            if rank == ARBITER && (params.trace.wants(k) || decision.is_some()) {
                let obj = want_obj.then(|| blocks.iter().map(|b| b[slots - 2]).collect::<CompensatedSum<f64>>().value());
                trace.push(trace_point(k, reduced, obj));
            }
            if let Some(v) = decision {
                break v;
            }
        }
        let u_own = divide_marginal(local.a.view(), q.view()).at(rank)?;
        local.set_own_u(&u_own);
        if comm {
            let u = all_gather(ep, Kind::U, k, &flatten(local.own_u())).at(rank)?;
            local.u = ndarray::Array2::from_shape_vec(local.u.dim(), u).expect("gathered u is n × N");
        }
        let r = apply_rows(local.kernel_cols_t.view(), local.u.view());
        let v_own = divide_marginal(local.b.view(), r.view()).at(rank)?;
        local.set_own_v(&v_own);
        r_last = r;
        ep.advance_iteration();
        k += 1;
    };
    reconcile(ep, &mut local, k)?;
    Ok(ClientOutcome {
        rank,
        iterations: k,
        verdict: Some(verdict),
        u: local.u,
        v: local.v,
        trace,
        busy_seconds: started.elapsed().as_secs_f64(),
        stats: ep.stats().clone(),
    })
}
