use std::time::Duration;

use fedsink_core::synth::{generate, GenSpec};
use fedsink_core::{solve_centralized, Problem, StopPolicy, Verdict};
use fedsink_fed::{run, run_centralized, run_on, Backend, FedError, FedParams, Topology, TraceSpec};
use fedsink_net::{sim_fabric, DelaySchedule, Endpoint, Envelope, FabricStats, NetError};

fn instance(n: usize, targets: usize, seed: u64) -> Problem<f64> {
    let mut spec = GenSpec::new(n, seed);
    spec.targets = targets;
    generate(&spec).unwrap()
}

fn assert_same_state(problem: &Problem<f64>, params: &FedParams, backend: &Backend) {
    let reference = solve_centralized(problem, &params.stop).unwrap();
    let out = run(problem, params, backend).unwrap();
    assert_eq!(out.report.iterations, reference.iterations, "{}", params.topology);
    assert_eq!(out.state.u, reference.state.u, "{} u", params.topology);
    assert_eq!(out.state.v, reference.state.v, "{} v", params.topology);
    assert_eq!(out.report.err_a.to_bits(), reference.err_a.to_bits());
    assert_eq!(out.report.objective.to_bits(), reference.objective.to_bits());
}

#[test]
fn undelayed_drivers_match_centralized_bitwise() {
    let p = instance(24, 2, 3);
    for budget in [0, 1, 7, 40] {
        let stop = StopPolicy::budget(budget);
        for c in [1, 2, 3, 4] {
            assert_same_state(&p, &FedParams::new(Topology::AllToAllSync, c).with_stop(stop), &Backend::Sim);
            assert_same_state(&p, &FedParams::new(Topology::StarSync, c).with_stop(stop), &Backend::Sim);
            assert_same_state(
                &p,
                &FedParams::new(Topology::AllToAllAsync, c).with_stop(stop).undamped(),
                &Backend::Sim,
            );
        }
    }
}

#[test]
fn undelayed_async_stops_with_centralized() {
    let p = instance(24, 2, 9);
    let stop = StopPolicy::loose().with_threshold(1e-9);
    let params = FedParams::new(Topology::AllToAllAsync, 4).with_stop(stop).undamped();
    let out = run(&p, &params, &Backend::Sim).unwrap();
    assert_eq!(out.report.verdict, Verdict::Converged);
    assert!(out.report.iterations_per_client.iter().all(|&k| k == out.report.iterations));
    assert_same_state(&p, &params, &Backend::Sim);
}

#[test]
fn threshold_stop_matches_centralized() {
    let p = instance(30, 1, 11);
    let stop = StopPolicy::loose().with_threshold(1e-9);
    for topology in [Topology::AllToAllSync, Topology::StarSync] {
        let params = FedParams::new(topology, 5).with_stop(stop);
        let out = run(&p, &params, &Backend::Sim).unwrap();
        assert_eq!(out.report.verdict, Verdict::Converged);
        assert!(out.report.err_a <= 1e-9);
        assert_same_state(&p, &params, &Backend::Sim);
    }
}

#[test]
fn tcp_matches_sim() {
    let p = instance(16, 1, 5);
    let stop = StopPolicy::budget(25);
    for topology in [Topology::AllToAllSync, Topology::StarSync] {
        let params = FedParams::new(topology, 4).with_stop(stop);
        let sim = run(&p, &params, &Backend::Sim).unwrap();
        let tcp = run(&p, &params, &Backend::Tcp { peers: vec![] }).unwrap();
        assert_eq!(sim.state, tcp.state, "{topology}");
        assert_eq!(tcp.report.backend, "tcp");
    }
}

#[test]
fn async_over_tcp_converges() {
    let p = instance(20, 1, 8);
    let params = FedParams::new(Topology::AllToAllAsync, 4)
        .with_alpha(0.5)
        .with_stop(StopPolicy::loose().with_threshold(1e-8).with_timeout(60.0));
    let out = run(&p, &params, &Backend::Tcp { peers: vec![] }).unwrap();
    assert_eq!(out.report.verdict, Verdict::Converged);
    assert!(out.report.err_a < 1e-6, "global error {}", out.report.err_a);
}

#[test]
fn local_iterations_never_reduce_iterations() {
    let p = instance(40, 1, 21);
    let stop = StopPolicy::loose().with_threshold(1e-8);
    let mut last_iterations = 0;
    for w in [1, 2, 4, 8] {
        let params = FedParams::new(Topology::AllToAllSync, 4).with_w(w).with_stop(stop);
        let out = run(&p, &params, &Backend::Sim).unwrap();
        assert_eq!(out.report.verdict, Verdict::Converged, "w = {w}");
        assert!(out.report.iterations >= last_iterations, "w = {w}");
        assert_eq!(out.report.iterations % w, w - 1);
        last_iterations = out.report.iterations;
    }
}

#[test]
fn fixed_delay_staleness_is_exact() {
    let p = instance(12, 1, 2);
    for d in [1, 2, 5] {
        let params = FedParams::new(Topology::AllToAllAsync, 3)
            .with_delay(DelaySchedule::fixed(d))
            .with_stop(StopPolicy::budget(50));
        let out = run(&p, &params, &Backend::Sim).unwrap();
        let tau = &out.report.tau.overall;
        assert!(tau.count > 0);
        assert_eq!(tau.mean, d as f64, "d = {d}");
        assert_eq!(tau.max, d);
        assert_eq!(tau.std, 0.0);
    }
}

#[test]
fn uniform_delay_converges_and_is_reproducible() {
    let p = instance(24, 1, 13);
    let params = FedParams::new(Topology::AllToAllAsync, 4)
        .with_alpha(0.5)
        .with_delay(DelaySchedule::uniform(1, 4, 99))
        .with_stop(StopPolicy::loose().with_threshold(1e-8));
    let a = run(&p, &params, &Backend::Sim).unwrap();
    let b = run(&p, &params, &Backend::Sim).unwrap();
    assert_eq!(a.report.verdict, Verdict::Converged);
    assert!(a.report.tau.overall.max <= 4 && a.report.tau.overall.max > 1);
    assert_eq!(a.report.to_json_line(true), b.report.to_json_line(true));
    assert!(!a.report.to_json_line(true).contains("total_s"));
    assert!(a.report.to_json_line(false).contains("total_s"));
}

#[test]
fn async_local_iterations_converge() {
    let p = instance(24, 1, 17);
    let params = FedParams::new(Topology::AllToAllAsync, 4)
        .with_w(4)
        .with_alpha(0.5)
        .with_stop(StopPolicy::loose().with_threshold(1e-8).with_max_iterations(20_000));
    let out = run(&p, &params, &Backend::Sim).unwrap();
    assert_eq!(out.report.verdict, Verdict::Converged);
}

#[test]
fn centralized_report_has_trajectory() {
    let p = instance(10, 1, 1);
    let out = run_centralized(&p, &StopPolicy::loose().with_threshold(1e-10), TraceSpec::full()).unwrap();
    let t = &out.report.trajectory;
    assert_eq!(t.len() as u64, out.report.iterations + 1);
    assert!(t.iter().all(|x| x.objective.is_some()));
    assert!(t.last().unwrap().err_a <= 1e-10);
}

#[test]
fn invalid_parameters_are_rejected() {
    let p = instance(10, 1, 1);
    let cases = [
        FedParams::new(Topology::AllToAllSync, 3),
        FedParams::new(Topology::StarSync, 2).with_w(2),
        FedParams::new(Topology::AllToAllAsync, 2).with_alpha(1.0),
        FedParams::new(Topology::AllToAllSync, 2).with_alpha(0.0),
        FedParams::new(Topology::AllToAllSync, 2).with_w(0),
    ];
    for params in cases {
        assert!(matches!(run(&p, &params, &Backend::Sim), Err(FedError::Params(_))), "{params:?}");
    }
    let tcp_delay = FedParams::new(Topology::AllToAllSync, 2).with_delay(DelaySchedule::fixed(3));
    assert!(matches!(run(&p, &tcp_delay, &Backend::Tcp { peers: vec![] }), Err(FedError::Params(_))));
}

/// Fails every send after a number of successful ones.
struct Crashing<E> {
    inner: E,
    sends_left: Option<usize>,
}

impl<E: Endpoint> Endpoint for Crashing<E> {
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    fn size(&self) -> usize {
        self.inner.size()
    }
    fn send(&mut self, to: usize, env: Envelope) -> Result<(), NetError> {
        if let Some(n) = self.sends_left.as_mut() {
            if *n == 0 {
                return Err(NetError::Io("injected crash".into()));
            }
            *n -= 1;
        }
        self.inner.send(to, env)
    }
    fn recv(&mut self, from: usize) -> Result<Envelope, NetError> {
        self.inner.recv(from)
    }
    fn post_broadcast(&mut self, env: Envelope) -> Result<(), NetError> {
        self.inner.post_broadcast(env)
    }
    fn drain_mailbox(&mut self) -> Result<Vec<Envelope>, NetError> {
        self.inner.drain_mailbox()
    }
    fn iteration(&self) -> u64 {
        self.inner.iteration()
    }
    fn advance_iteration(&mut self) {
        self.inner.advance_iteration()
    }
    fn stats(&self) -> &FabricStats {
        self.inner.stats()
    }
}

#[test]
fn crashed_client_surfaces_as_the_root_cause() {
    let p = instance(12, 1, 4);
    let params = FedParams::new(Topology::AllToAllSync, 3).with_stop(StopPolicy::budget(100));
    let mut params = params;
    params.recv_timeout_secs = 2.0;
    let mut eps: Vec<_> = sim_fabric(3, &DelaySchedule::zero(), Duration::from_secs(2))
        .into_iter()
        .map(|inner| {
            let sends_left = (inner.rank() == 1).then_some(20);
            Crashing { inner, sends_left }
        })
        .collect();
    match run_on(&p, &params, &mut eps, "sim") {
        Err(FedError::Net { rank: 1, source: NetError::Io(_) }) => {}
        other => panic!("unexpected {:?}", other.map(|o| o.report.verdict)),
    }
}

#[test]
fn dropped_peer_is_reported_as_lost() {
    let p = instance(12, 1, 4);
    let kernel = fedsink_core::gibbs_kernel(p.cost().view(), p.epsilon()).unwrap();
    let views = fedsink_core::partition::slice_with_kernel(&p, &kernel, 3).unwrap();
    let params = FedParams::new(Topology::AllToAllSync, 3).with_stop(StopPolicy::budget(100));
    let mut eps = sim_fabric(3, &DelaySchedule::zero(), Duration::from_secs(5));
    let dead = eps.remove(1);
    drop(dead);
    let mut views = views.into_iter();
    let v0 = views.next().unwrap();
    let r = fedsink_fed::sync_all_to_all_client(v0, &mut eps[0], &params);
    assert!(matches!(r, Err(FedError::Net { rank: 0, source: NetError::PeerLost { peer: 1 } })), "{r:?}");
}
