use std::thread;
use std::time::Duration;

use fedsink_net::frame::{decode, encode};
use fedsink_net::{
    all_gather, receive_scatter, scatter, sim_fabric, tcp_loopback, DelaySchedule, Endpoint, Envelope, Kind, NetError,
    SimEndpoint,
};
use proptest::prelude::*;

fn arb_envelope() -> impl Strategy<Value = Envelope> {
    (
        any::<u16>(),
        0u8..5,
        any::<u64>(),
        any::<u32>(),
        prop::collection::vec(any::<u64>().prop_map(f64::from_bits), 0..64),
    )
        .prop_map(|(sender, kind, iteration, block_index, payload)| Envelope {
            sender,
            kind: Kind::from_code(kind).unwrap(),
            iteration,
            block_index,
            payload,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]
    #[test]
    fn frames_roundtrip_bit_exactly(env in arb_envelope()) {
        let bytes = encode(&env).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert!(back.bit_eq(&env));
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}

fn run_on_threads<E, T, F>(eps: Vec<E>, f: F) -> Vec<T>
where
    E: Endpoint + 'static,
    T: Send + 'static,
    F: Fn(&mut E) -> T + Send + Sync + Copy + 'static,
{
    let handles: Vec<_> = eps
        .into_iter()
        .map(|mut ep| thread::spawn(move || f(&mut ep)))
        .collect();
    handles.into_iter().map(|h| h.join().unwrap()).collect()
}

#[test]
fn tcp_all_gather_and_scatter() {
    let eps = tcp_loopback(3, Duration::from_secs(10)).unwrap();
    let out = run_on_threads(eps, |ep| {
        let r = ep.rank() as f64;
        let gathered = all_gather(ep, Kind::V, 0, &[r, r + 0.5]).unwrap();
        let slice = if ep.rank() == 2 {
            scatter(ep, Kind::Q, 0, &[5.0, 6.0, 7.0, 8.0], &[0, 1]).unwrap();
            vec![]
        } else {
            receive_scatter(ep, 2, Kind::Q).unwrap()
        };
        (gathered, slice)
    });
    for (gathered, _) in &out {
        assert_eq!(gathered, &vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
    }
    assert_eq!(out[0].1, vec![5.0, 6.0]);
    assert_eq!(out[1].1, vec![7.0, 8.0]);
}

#[test]
fn tcp_lost_peer_is_detected() {
    let mut eps = tcp_loopback(2, Duration::from_secs(10)).unwrap();
    drop(eps.pop());
    assert_eq!(eps[0].recv(1).unwrap_err(), NetError::PeerLost { peer: 1 });
}

#[test]
fn sim_gather_with_silent_peer_times_out() {
    let mut eps = sim_fabric(3, &DelaySchedule::zero(), Duration::from_millis(100));
    let _silent = eps.pop();
    let mut e1 = eps.pop().unwrap();
    let h = thread::spawn(move || all_gather(&mut e1, Kind::U, 0, &[1.0]));
    let err = all_gather(&mut eps[0], Kind::U, 0, &[0.0]).unwrap_err();
    assert_eq!(err, NetError::Timeout { peer: 2 });
    assert_eq!(h.join().unwrap().unwrap_err(), NetError::Timeout { peer: 2 });
}

#[test]
fn tcp_mailbox_between_markers() {
    let eps = tcp_loopback(2, Duration::from_secs(10)).unwrap();
    let out = run_on_threads(eps, |ep| {
        ep.begin_async().unwrap();
        let rank = ep.rank();
        for k in 0..5 {
            ep.post_broadcast(Envelope::new(rank, Kind::V, k, rank, vec![k as f64])).unwrap();
        }
        ep.end_async().unwrap();
        // the sync hand-off orders everything posted before it
        let other = 1 - rank;
        ep.send(other, Envelope::new(rank, Kind::S, 0, rank, vec![])).unwrap();
        ep.recv(other).unwrap();
        ep.advance_iteration();
        let got = ep.drain_mailbox().unwrap();
        (got, ep.stats().tau_samples(), ep.stats().coalesced)
    });
    for (got, samples, coalesced) in out {
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload, vec![4.0]);
        assert_eq!(samples, 1);
        assert_eq!(coalesced, 4);
    }
}

type Trace = (Vec<(usize, u16, Kind, u64)>, Vec<(u64, u64, u64)>);

/// A fixed lockstep program on a seeded schedule, returning everything the
/// receivers observed.
fn lockstep_trace(schedule: &DelaySchedule) -> Trace {
    let mut eps: Vec<SimEndpoint> = sim_fabric(3, schedule, Duration::from_secs(1));
    let mut seen = Vec::new();
    for t in 0..50 {
        for (r, ep) in eps.iter_mut().enumerate() {
            ep.post_broadcast(Envelope::new(r, Kind::V, t, r, vec![t as f64])).unwrap();
        }
        for (r, ep) in eps.iter_mut().enumerate() {
            for env in ep.drain_mailbox().unwrap() {
                seen.push((r, env.sender, env.kind, env.iteration));
            }
            ep.advance_iteration();
        }
    }
    let stats = eps
        .iter()
        .map(|e| (e.stats().delivered, e.stats().coalesced, e.stats().tau_samples()))
        .collect();
    (seen, stats)
}

#[test]
fn simulator_is_deterministic_and_accounts_every_delivery() {
    let schedule = DelaySchedule::uniform(1, 4, 9);
    let (a, sa) = lockstep_trace(&schedule);
    let (b, sb) = lockstep_trace(&schedule);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let delivered: u64 = sa.iter().map(|s| s.0).sum();
    let samples: u64 = sa.iter().map(|s| s.2).sum();
    assert_eq!(delivered as usize, a.len());
    assert_eq!(samples, delivered);
    // freshness: per stream, consumed stamps strictly increase
    for r in 0..3 {
        for s in 0..3u16 {
            let stamps: Vec<u64> = a.iter().filter(|x| x.0 == r && x.1 == s).map(|x| x.3).collect();
            assert!(stamps.windows(2).all(|w| w[0] < w[1]), "{stamps:?}");
        }
    }
}

#[test]
fn fixed_delay_ages_are_exact() {
    for d in 1..=4 {
        let mut eps = sim_fabric(2, &DelaySchedule::fixed(d), Duration::from_secs(1));
        for t in 0..30 {
            for (r, ep) in eps.iter_mut().enumerate() {
                ep.post_broadcast(Envelope::new(r, Kind::U, t, r, vec![])).unwrap();
            }
            for ep in eps.iter_mut() {
                ep.drain_mailbox().unwrap();
                ep.advance_iteration();
            }
        }
        for ep in &eps {
            let tau = ep.stats().tau_total();
            assert_eq!(tau.mean(), d as f64);
            assert_eq!((tau.min, tau.max), (d, d));
            assert_eq!(tau.count, 30 - (d - 1));
        }
    }
}
