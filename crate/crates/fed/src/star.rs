//! Synchronous star: the server holds `K` and `C` and performs both products;
//! clients hold only their marginal slices. Per iteration clients send `v`
//! blocks, receive their slice of `q = K v`, report residual partials of the
//! current state, and on a continue decision send `u` blocks and receive
//! their slice of `r = Kᵀ u`. The server is the arbiter. Before the first
//! iteration the server scatters `Kᵀ 1` so clients can report `v` residuals
//! from iteration 0.

use std::time::Instant;

use fedsink_core::kernel::{apply_rows, divide_marginal};
use fedsink_core::solve::total_objective;
use fedsink_core::{evaluate_stop, BlockView, GibbsKernel, ScalingState, Verdict};
use fedsink_net::{expect, gather_from, receive_scatter, scatter, Endpoint, Envelope, Kind};
use ndarray::Array2;

use crate::error::{FedError, RankContext};
use crate::local::{
    flatten, reduce_partials, residual_partials, trace_point, unflatten, verdict_code, verdict_from_code, write_block,
    ClientOutcome, Local,
};
use crate::params::FedParams;

pub fn star_client<E: Endpoint + ?Sized>(
    view: BlockView<f64>,
    ep: &mut E,
    server: usize,
) -> Result<ClientOutcome, FedError> {
    let started = Instant::now();
    let mut local = Local::new(view);
    let rank = local.rank;
    let targets = local.targets();
    let mut r_last = unflatten(&receive_scatter(ep, server, Kind::R).at(rank)?, targets);
    let mut k = 0u64;
    let verdict = loop {
        let own_v = local.own_v().to_owned();
        ep.send(server, Envelope::new(rank, Kind::V, k, rank, flatten(own_v.view()))).at(rank)?;
        let q = unflatten(&receive_scatter(ep, server, Kind::Q).at(rank)?, targets);
        let partial = residual_partials(local.own_u(), q.view(), local.a.view(), own_v.view(), r_last.view(), local.b.view());
        ep.send(server, Envelope::new(rank, Kind::S, k, rank, partial)).at(rank)?;
        let decision = expect(ep, server, Kind::S).at(rank)?;
        if let Some(v) = verdict_from_code(decision.payload[0]) {
            break v;
        }
        let u_own = divide_marginal(local.a.view(), q.view()).at(rank)?;
        local.set_own_u(&u_own);
        ep.send(server, Envelope::new(rank, Kind::U, k, rank, flatten(u_own.view()))).at(rank)?;
        let r = unflatten(&receive_scatter(ep, server, Kind::R).at(rank)?, targets);
        let v_own = divide_marginal(local.b.view(), r.view()).at(rank)?;
        local.set_own_v(&v_own);
        r_last = r;
        ep.advance_iteration();
        k += 1;
    };
    Ok(ClientOutcome {
        rank,
        iterations: k,
        verdict: Some(verdict),
        u: local.own_u().to_owned(),
        v: local.own_v().to_owned(),
        trace: Vec::new(),
        busy_seconds: started.elapsed().as_secs_f64(),
        stats: ep.stats().clone(),
    })
}

/// Server loop. `clients` are the client ranks in block order.
pub fn star_server<E: Endpoint + ?Sized>(
    kernel: &GibbsKernel<f64>,
    cost: &Array2<f64>,
    targets: usize,
    ep: &mut E,
    clients: &[usize],
    params: &FedParams,
) -> Result<ClientOutcome, FedError> {
    let started = Instant::now();
    let rank = ep.rank();
    let n = kernel.dim();
    let mut state = ScalingState::ones(n, targets);
    let mut trace = Vec::new();
    let r0 = apply_rows(kernel.transposed(), state.u.view());
    scatter(ep, Kind::R, 0, &flatten(r0.view()), clients).at(rank)?;
    let mut k = 0u64;
    let verdict: Verdict = loop {
        for (j, block) in gather_from(ep, clients, Kind::V).at(rank)?.iter().enumerate() {
            write_block(&mut state.v, j, block);
        }
        let q = apply_rows(kernel.matrix(), state.v.view());
        scatter(ep, Kind::Q, k, &flatten(q.view()), clients).at(rank)?;
        let partials = gather_from(ep, clients, Kind::S).at(rank)?;
        let reduced = reduce_partials(partials.iter().map(|p| &p[..]), targets);
        let decision = evaluate_stop(&params.stop, reduced.err_a, k, started.elapsed());
        if params.trace.wants(k) || decision.is_some() {
            let obj = (params.trace.objective && params.trace.wants(k)).then(|| total_objective(&state, kernel, cost.view()));
            trace.push(trace_point(k, reduced, obj));
        }
        for &c in clients {
            ep.send(c, Envelope::new(rank, Kind::S, k, c, vec![verdict_code(decision)])).at(rank)?;
        }
        if let Some(v) = decision {
            break v;
        }
        for (j, block) in gather_from(ep, clients, Kind::U).at(rank)?.iter().enumerate() {
            write_block(&mut state.u, j, block);
        }
        let r = apply_rows(kernel.transposed(), state.u.view());
        scatter(ep, Kind::R, k, &flatten(r.view()), clients).at(rank)?;
        ep.advance_iteration();
        k += 1;
    };
    Ok(ClientOutcome {
        rank,
        iterations: k,
        verdict: Some(verdict),
        u: state.u,
        v: state.v,
        trace,
        busy_seconds: started.elapsed().as_secs_f64(),
        stats: ep.stats().clone(),
    })
}
