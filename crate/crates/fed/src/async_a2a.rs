//! Asynchronous all-to-all with damped updates.
//!
//! One client iteration has four phases: post the own `v` block; read the
//! mailbox, form `K v` and post the own residual; read the mailbox, decide
//! whether to stop and otherwise take a damped `u` step; read the mailbox
//! again and take a damped `v` step. Foreign blocks are overwritten with whatever the mailbox
//! holds, `U` envelopes into the local `u` copy and `V` envelopes into the
//! local `v` copy. Clients also post the per-column residual of their own
//! rows as `S` envelopes and stop once the sum of the latest partial from
//! every client is below threshold; with zero delay that sum is the exact
//! global residual. A stopping client announces its verdict and peers adopt
//! it once the announcement arrives. The run verdict is client 0's. A final exchange of own blocks gives every client
//! the same state. With `w > 1` own blocks are only broadcast on every
//! `w`-th iteration.
//!
//! [`run_async_lockstep`] drives all clients from one thread in phase order,
//! which makes simulator runs reproducible bit for bit.
//! [`async_all_to_all_client`] is the free-running form for one thread per
//! client; it waits whenever an active peer's newest `v` block falls more
//! than [`STALENESS_SLACK`] plus `w` iterations behind.

use std::time::{Duration, Instant};

use fedsink_core::kernel::{apply_rows, column_residuals, damped_combine, divide_marginal, worst_column};
use fedsink_core::{evaluate_stop, BlockView, Verdict};
use fedsink_net::{Endpoint, Envelope, Kind, NetError};
use ndarray::Array2;

use crate::error::{FedError, RankContext};
use crate::local::{flatten, verdict_code, verdict_from_code, write_block, ClientOutcome, Local};
use crate::params::FedParams;
use crate::report::TracePoint;
use crate::sync_a2a::{reconcile, ARBITER};

/// Iterations a free-running client may run ahead of its slowest active peer.
pub const STALENESS_SLACK: u64 = 2;

struct AsyncClient {
    local: Local,
    r_last: Array2<f64>,
    q: Array2<f64>,
    own_err: Vec<f64>,
    /// Latest per-column residual partial heard from each peer.
    peer_err: Vec<Option<Vec<f64>>>,
    peer_iter: Vec<Option<u64>>,
    peer_done: Vec<Option<Verdict>>,
    k: u64,
    verdict: Option<Verdict>,
    started: Instant,
    busy: f64,
    trace: Vec<TracePoint>,
}

impl AsyncClient {
    fn new(view: BlockView<f64>) -> Self {
        let clients = view.clients;
        let local = Local::new(view);
        let r_last = apply_rows(local.kernel_cols_t.view(), local.u.view());
        AsyncClient {
            q: Array2::zeros((0, 0)),
            own_err: Vec::new(),
            peer_err: vec![None; clients],
            peer_iter: vec![None; clients],
            peer_done: vec![None; clients],
            local,
            r_last,
            k: 0,
            verdict: None,
            started: Instant::now(),
            busy: 0.0,
            trace: Vec::new(),
        }
    }

    fn absorb(&mut self, envs: Vec<Envelope>) {
        for e in envs {
            let j = e.block_index as usize;
            match e.kind {
                Kind::U if j != self.local.rank => write_block(&mut self.local.u, j, &e.payload),
                Kind::V if j != self.local.rank => {
                    write_block(&mut self.local.v, j, &e.payload);
                    self.peer_iter[j] = Some(e.iteration);
                }
                Kind::S if j != self.local.rank => {
                    let mut p = e.payload;
                    self.peer_done[j] = p.pop().and_then(verdict_from_code);
                    self.peer_err[j] = Some(p);
                }
                _ => {}
            }
        }
    }

    fn post_v<E: Endpoint + ?Sized>(&mut self, ep: &mut E, params: &FedParams) -> Result<(), FedError> {
        if !(self.k + 1).is_multiple_of(params.w) {
            return Ok(());
        }
        let t = Instant::now();
        let rank = self.local.rank;
        let env = Envelope::new(rank, Kind::V, self.k, rank, flatten(self.local.own_v()));
        ep.post_broadcast(env).at(rank)?;
        self.busy += t.elapsed().as_secs_f64();
        Ok(())
    }

    fn measure<E: Endpoint + ?Sized>(&mut self, ep: &mut E, params: &FedParams) -> Result<(), FedError> {
        let t = Instant::now();
        let rank = self.local.rank;
        self.absorb(ep.drain_mailbox().at(rank)?);
        let l = &self.local;
        self.q = apply_rows(l.kernel_rows.view(), l.v.view());
        self.own_err = column_residuals(l.own_u(), self.q.view(), l.a.view()).iter().map(|x| x.0).collect();
        if (self.k + 1).is_multiple_of(params.w) {
            self.post_err(ep)?;
        }
        self.busy += t.elapsed().as_secs_f64();
        Ok(())
    }

    /// Own residual partial with the verdict code in a trailing slot.
    fn post_err<E: Endpoint + ?Sized>(&self, ep: &mut E) -> Result<(), FedError> {
        let rank = self.local.rank;
        let mut payload = self.own_err.clone();
        payload.push(verdict_code(self.verdict));
        ep.post_broadcast(Envelope::new(rank, Kind::S, self.k, rank, payload)).at(rank)
    }

    /// Blocks until no active peer lags more than the slack behind.
    fn pace<E: Endpoint + ?Sized>(&mut self, ep: &mut E, params: &FedParams) -> Result<(), FedError> {
        let rank = self.local.rank;
        let allowed = STALENESS_SLACK + params.w;
        let since = Instant::now();
        loop {
            let lagging = (0..self.peer_iter.len()).find(|&j| {
                j != rank && self.peer_done[j].is_none() && self.peer_iter[j].map_or(self.k >= allowed, |i| i + allowed < self.k)
            });
            let Some(peer) = lagging else { return Ok(()) };
            if since.elapsed() > params.recv_timeout() {
                return Err(FedError::Net { rank, source: NetError::Timeout { peer } });
            }
            std::thread::sleep(Duration::from_micros(50));
            self.absorb(ep.drain_mailbox().at(rank)?);
        }
    }

    /// Worst column of the summed partials; `f64::MAX` until every peer has reported.
    fn estimated_err(&self) -> f64 {
        let mut total = self.own_err.clone();
        for (j, p) in self.peer_err.iter().enumerate() {
            if j == self.local.rank {
                continue;
            }
            match p {
                Some(p) => total.iter_mut().zip(p).for_each(|(t, x)| *t += x),
                None => return f64::MAX,
            }
        }
        total.into_iter().fold(0.0, |m: f64, x| if x.is_nan() || x > m { x } else { m })
    }

    fn step_u<E: Endpoint + ?Sized>(&mut self, ep: &mut E, params: &FedParams) -> Result<(), FedError> {
        let t = Instant::now();
        let rank = self.local.rank;
        self.absorb(ep.drain_mailbox().at(rank)?);
        let err_a = self.estimated_err();
        let decision = evaluate_stop(&params.stop, err_a, self.k, self.started.elapsed())
            .or_else(|| self.peer_done.iter().find_map(|d| *d));
        let l = &self.local;
        if rank == ARBITER && (params.trace.wants(self.k) || decision.is_some()) {
            let (err_b, _) = worst_column(&column_residuals(l.own_v(), self.r_last.view(), l.b.view()));
            self.trace.push(TracePoint {
                iteration: self.k,
                err_a,
                err_b,
                objective: None,
            });
        }
        if decision.is_some() {
            self.verdict = decision;
            self.post_err(ep)?;
        } else {
            let fresh = divide_marginal(l.a.view(), self.q.view()).at(rank)?;
            let u_own = damped_combine(fresh.view(), l.own_u(), params.alpha);
            self.local.set_own_u(&u_own);
            if (self.k + 1).is_multiple_of(params.w) {
                let env = Envelope::new(rank, Kind::U, self.k, rank, flatten(u_own.view()));
                ep.post_broadcast(env).at(rank)?;
            }
        }
        self.busy += t.elapsed().as_secs_f64();
        Ok(())
    }

    fn step_v<E: Endpoint + ?Sized>(&mut self, ep: &mut E, params: &FedParams) -> Result<(), FedError> {
        let t = Instant::now();
        let rank = self.local.rank;
        self.absorb(ep.drain_mailbox().at(rank)?);
        let l = &self.local;
        let r = apply_rows(l.kernel_cols_t.view(), l.u.view());
        let fresh = divide_marginal(l.b.view(), r.view()).at(rank)?;
        let v_own = damped_combine(fresh.view(), l.own_v(), params.alpha);
        self.local.set_own_v(&v_own);
        self.r_last = r;
        ep.advance_iteration();
        self.k += 1;
        self.busy += t.elapsed().as_secs_f64();
        Ok(())
    }

    fn finish<E: Endpoint + ?Sized>(self, ep: &E) -> ClientOutcome {
        ClientOutcome {
            rank: self.local.rank,
            iterations: self.k,
            verdict: self.verdict,
            u: self.local.u,
            v: self.local.v,
            trace: self.trace,
            busy_seconds: self.busy,
            stats: ep.stats().clone(),
        }
    }
}

/// Free-running client for one thread per rank.
pub fn async_all_to_all_client<E: Endpoint + ?Sized>(
    view: BlockView<f64>,
    ep: &mut E,
    params: &FedParams,
) -> Result<ClientOutcome, FedError> {
    let mut client = AsyncClient::new(view);
    let rank = client.local.rank;
    ep.begin_async().at(rank)?;
    while client.verdict.is_none() {
        client.pace(ep, params)?;
        client.post_v(ep, params)?;
        client.measure(ep, params)?;
        client.step_u(ep, params)?;
        if client.verdict.is_none() {
            client.step_v(ep, params)?;
        }
    }
    ep.end_async().at(rank)?;
    let t = Instant::now();
    reconcile(ep, &mut client.local, client.k)?;
    client.busy += t.elapsed().as_secs_f64();
    Ok(client.finish(ep))
}

/// All clients on the calling thread, phase by phase. Endpoints must not
/// block on mailbox operations.
pub fn run_async_lockstep<E: Endpoint>(
    views: Vec<BlockView<f64>>,
    eps: &mut [E],
    params: &FedParams,
) -> Result<Vec<ClientOutcome>, FedError> {
    let mut clients: Vec<AsyncClient> = views.into_iter().map(AsyncClient::new).collect();
    for (c, ep) in clients.iter().zip(eps.iter_mut()) {
        ep.begin_async().at(c.local.rank)?;
    }
    while clients.iter().any(|c| c.verdict.is_none()) {
        for (c, ep) in clients.iter_mut().zip(eps.iter_mut()).filter(|(c, _)| c.verdict.is_none()) {
            c.post_v(ep, params)?;
        }
        for (c, ep) in clients.iter_mut().zip(eps.iter_mut()).filter(|(c, _)| c.verdict.is_none()) {
            c.measure(ep, params)?;
        }
        for (c, ep) in clients.iter_mut().zip(eps.iter_mut()).filter(|(c, _)| c.verdict.is_none()) {
            c.step_u(ep, params)?;
        }
        for (c, ep) in clients.iter_mut().zip(eps.iter_mut()).filter(|(c, _)| c.verdict.is_none()) {
            c.step_v(ep, params)?;
        }
    }
    for (c, ep) in clients.iter().zip(eps.iter_mut()) {
        ep.end_async().at(c.local.rank)?;
    }

    // final exchange, split into send and receive sweeps so one thread can drive it
    let size = clients.len();
    for (c, ep) in clients.iter().zip(eps.iter_mut()) {
        let rank = c.local.rank;
        for to in (0..size).filter(|&p| p != rank) {
            ep.send(to, Envelope::new(rank, Kind::U, c.k, rank, flatten(c.local.own_u()))).at(rank)?;
            ep.send(to, Envelope::new(rank, Kind::V, c.k, rank, flatten(c.local.own_v()))).at(rank)?;
        }
    }
    for (c, ep) in clients.iter_mut().zip(eps.iter_mut()) {
        let rank = c.local.rank;
        for from in (0..size).filter(|&p| p != rank) {
            let u = fedsink_net::expect(ep, from, Kind::U).at(rank)?;
            write_block(&mut c.local.u, from, &u.payload);
            let v = fedsink_net::expect(ep, from, Kind::V).at(rank)?;
            write_block(&mut c.local.v, from, &v.payload);
        }
    }
    Ok(clients.into_iter().zip(eps.iter()).map(|(c, ep)| c.finish(ep)).collect())
}
