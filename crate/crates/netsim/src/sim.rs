//! In-process fabric. Point-to-point traffic uses one unbounded channel per
//! ordered pair; mailbox traffic goes through a shared hub that applies the
//! delay schedule against each receiver's iteration clock.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::delay::{DelaySampler, DelaySchedule};
use crate::endpoint::{check_peer, Endpoint, NetError};
use crate::envelope::{Envelope, Kind};
use crate::stats::{payload_bytes, FabricStats};

pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug)]
struct Pending {
    env: Envelope,
    sent_at: u64,
    ready_at: u64,
    seq: u64,
}

#[derive(Debug)]
struct Hub {
    clocks: Vec<u64>,
    inflight: Vec<Vec<Pending>>,
    /// Sequence number of the last envelope read, per receiver and stream.
    consumed: Vec<BTreeMap<(u16, Kind), u64>>,
    sampler: DelaySampler,
    seq: u64,
}

pub struct SimEndpoint {
    rank: usize,
    size: usize,
    hub: Arc<Mutex<Hub>>,
    tx: Vec<Option<Sender<Envelope>>>,
    rx: Vec<Option<Receiver<Envelope>>>,
    clock: u64,
    timeout: Duration,
    stats: FabricStats,
}

/// Builds a fully connected fabric of `size` endpoints.
pub fn sim_fabric(size: usize, schedule: &DelaySchedule, timeout: Duration) -> Vec<SimEndpoint> {
    let hub = Arc::new(Mutex::new(Hub {
        clocks: vec![0; size],
        inflight: (0..size).map(|_| Vec::new()).collect(),
        consumed: vec![BTreeMap::new(); size],
        sampler: DelaySampler::new(schedule),
        seq: 0,
    }));
    let mut tx: Vec<Vec<Option<Sender<Envelope>>>> = (0..size).map(|_| (0..size).map(|_| None).collect()).collect();
    let mut rx: Vec<Vec<Option<Receiver<Envelope>>>> = (0..size).map(|_| (0..size).map(|_| None).collect()).collect();
    for from in 0..size {
        for to in 0..size {
            if from != to {
                let (s, r) = unbounded();
                tx[from][to] = Some(s);
                rx[to][from] = Some(r);
            }
        }
    }
    tx.into_iter()
        .zip(rx)
        .enumerate()
        .map(|(rank, (tx, rx))| SimEndpoint {
            rank,
            size,
            hub: Arc::clone(&hub),
            tx,
            rx,
            clock: 0,
            timeout,
            stats: FabricStats::default(),
        })
        .collect()
}

impl SimEndpoint {
    /// Deliverable mailbox entries after coalescing, without consuming them.
    pub fn mailbox_len(&self) -> usize {
        let hub = self.hub.lock().expect("hub poisoned");
        let mut streams: Vec<(u16, Kind)> = hub.inflight[self.rank]
            .iter()
            .filter(|p| p.ready_at <= self.clock)
            .map(|p| (p.env.sender, p.env.kind))
            .collect();
        streams.sort();
        streams.dedup();
        streams.len()
    }
}

impl Endpoint for SimEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, to: usize, env: Envelope) -> Result<(), NetError> {
        check_peer(to, self.size)?;
        let started = Instant::now();
        let bytes = payload_bytes(&env.payload);
        let link = self.tx[to].as_ref().ok_or(NetError::BadRank { rank: to, size: self.size })?;
        let res = link.send(env).map_err(|_| NetError::PeerLost { peer: to });
        self.stats.comm_seconds += started.elapsed().as_secs_f64();
        res?;
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += bytes;
        Ok(())
    }

    fn recv(&mut self, from: usize) -> Result<Envelope, NetError> {
        check_peer(from, self.size)?;
        let started = Instant::now();
        let link = self.rx[from].as_ref().ok_or(NetError::BadRank { rank: from, size: self.size })?;
        let res = link.recv_timeout(self.timeout);
        self.stats.comm_seconds += started.elapsed().as_secs_f64();
        let env = res.map_err(|e| match e {
            RecvTimeoutError::Timeout => NetError::Timeout { peer: from },
            RecvTimeoutError::Disconnected => NetError::PeerLost { peer: from },
        })?;
        self.stats.messages_received += 1;
        self.stats.bytes_received += payload_bytes(&env.payload);
        Ok(env)
    }

    fn post_broadcast(&mut self, env: Envelope) -> Result<(), NetError> {
        let mut hub = self.hub.lock().expect("hub poisoned");
        let bytes = payload_bytes(&env.payload);
        for to in (0..self.size).filter(|&to| to != self.rank) {
            let d = hub.sampler.draw(self.rank, to);
            let sent_at = hub.clocks[to];
            let seq = hub.seq;
            hub.seq += 1;
            hub.inflight[to].push(Pending {
                env: env.clone(),
                sent_at,
                ready_at: sent_at + d - 1,
                seq,
            });
            self.stats.messages_sent += 1;
            self.stats.bytes_sent += bytes;
        }
        Ok(())
    }

    fn drain_mailbox(&mut self) -> Result<Vec<Envelope>, NetError> {
        let mut hub = self.hub.lock().expect("hub poisoned");
        let now = self.clock;
        let pending = std::mem::take(&mut hub.inflight[self.rank]);
        let (ready, waiting): (Vec<Pending>, Vec<Pending>) = pending.into_iter().partition(|p| p.ready_at <= now);
        hub.inflight[self.rank] = waiting;

        let mut newest: BTreeMap<(u16, Kind), Pending> = BTreeMap::new();
        for p in ready {
            let key = (p.env.sender, p.env.kind);
            let stale = hub.consumed[self.rank].get(&key).is_some_and(|&s| s > p.seq);
            if stale {
                self.stats.coalesced += 1;
                continue;
            }
            match newest.get(&key) {
                Some(q) if q.seq > p.seq => self.stats.coalesced += 1,
                Some(_) => {
                    self.stats.coalesced += 1;
                    newest.insert(key, p);
                }
                None => {
                    newest.insert(key, p);
                }
            }
        }
        let mut out = Vec::with_capacity(newest.len());
        for (key, p) in newest {
            hub.consumed[self.rank].insert(key, p.seq);
            self.stats.record_tau(key.0, key.1, now - p.sent_at + 1);
            self.stats.messages_received += 1;
            self.stats.bytes_received += payload_bytes(&p.env.payload);
            out.push(p.env);
        }
        Ok(out)
    }

    fn iteration(&self) -> u64 {
        self.clock
    }

    fn advance_iteration(&mut self) {
        self.clock += 1;
        self.hub.lock().expect("hub poisoned").clocks[self.rank] = self.clock;
    }

    fn stats(&self) -> &FabricStats {
        &self.stats
    }
}
