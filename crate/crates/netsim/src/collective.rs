//! Blocking collectives built on point-to-point `send`/`recv`. Blocks are
//! always assembled by rank, never by arrival order.

use crate::endpoint::{Endpoint, NetError};
use crate::envelope::{Envelope, Kind};
use crate::frame::FrameError;

/// Receives the next envelope from `from` and checks its kind.
pub fn expect<E: Endpoint + ?Sized>(ep: &mut E, from: usize, kind: Kind) -> Result<Envelope, NetError> {
    let env = ep.recv(from)?;
    if env.kind != kind {
        return Err(NetError::Unexpected { peer: from, expected: kind, got: env.kind });
    }
    Ok(env)
}

/// Every rank contributes one block; every rank gets all blocks by rank.
pub fn all_gather_blocks<E: Endpoint + ?Sized>(
    ep: &mut E,
    kind: Kind,
    iteration: u64,
    mine: &[f64],
) -> Result<Vec<Vec<f64>>, NetError> {
    let (rank, size) = (ep.rank(), ep.size());
    for to in (0..size).filter(|&p| p != rank) {
        ep.send(to, Envelope::new(rank, kind, iteration, rank, mine.to_vec()))?;
    }
    let mut blocks = Vec::with_capacity(size);
    for from in 0..size {
        if from == rank {
            blocks.push(mine.to_vec());
            continue;
        }
        let env = expect(ep, from, kind)?;
        if env.payload.len() != mine.len() {
            return Err(FrameError::PayloadMismatch { expected: mine.len(), got: env.payload.len() }.into());
        }
        blocks.push(env.payload);
    }
    Ok(blocks)
}

pub fn all_gather<E: Endpoint + ?Sized>(ep: &mut E, kind: Kind, iteration: u64, mine: &[f64]) -> Result<Vec<f64>, NetError> {
    Ok(all_gather_blocks(ep, kind, iteration, mine)?.concat())
}

/// Sends equal consecutive slices of `full` to `clients`, slice `j` to
/// `clients[j]`.
pub fn scatter<E: Endpoint + ?Sized>(
    ep: &mut E,
    kind: Kind,
    iteration: u64,
    full: &[f64],
    clients: &[usize],
) -> Result<(), NetError> {
    if clients.is_empty() || !full.len().is_multiple_of(clients.len()) {
        return Err(FrameError::PayloadMismatch {
            expected: clients.len(),
            got: full.len(),
        }
        .into());
    }
    let m = full.len() / clients.len();
    for (j, &to) in clients.iter().enumerate() {
        ep.send(to, Envelope::new(ep.rank(), kind, iteration, j, full[j * m..(j + 1) * m].to_vec()))?;
    }
    Ok(())
}

pub fn receive_scatter<E: Endpoint + ?Sized>(ep: &mut E, server: usize, kind: Kind) -> Result<Vec<f64>, NetError> {
    Ok(expect(ep, server, kind)?.payload)
}

/// Collects one block from each of `clients`, in the given order.
pub fn gather_from<E: Endpoint + ?Sized>(ep: &mut E, clients: &[usize], kind: Kind) -> Result<Vec<Vec<f64>>, NetError> {
    let mut blocks = Vec::with_capacity(clients.len());
    for &from in clients {
        let env = expect(ep, from, kind)?;
        if let Some(first) = blocks.first().map(Vec::len) {
            if env.payload.len() != first {
                return Err(FrameError::PayloadMismatch { expected: first, got: env.payload.len() }.into());
            }
        }
        blocks.push(env.payload);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelaySchedule;
    use crate::sim::sim_fabric;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn two_ranks_gather() {
        let eps = sim_fabric(2, &DelaySchedule::zero(), Duration::from_secs(5));
        let out: Vec<Vec<f64>> = eps
            .into_iter()
            .map(|mut ep| {
                thread::spawn(move || {
                    let mine = if ep.rank() == 0 { vec![1.0, 2.0] } else { vec![3.0, 4.0] };
                    all_gather(&mut ep, Kind::V, 0, &mine).unwrap()
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect();
        assert_eq!(out, vec![vec![1.0, 2.0, 3.0, 4.0]; 2]);
    }

    #[test]
    fn single_rank_gather_is_identity() {
        let mut eps = sim_fabric(1, &DelaySchedule::zero(), Duration::from_secs(1));
        assert_eq!(all_gather(&mut eps[0], Kind::U, 0, &[5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn scatter_slices_by_client() {
        let mut eps = sim_fabric(3, &DelaySchedule::zero(), Duration::from_secs(1));
        scatter(&mut eps[2], Kind::Q, 0, &[5.0, 6.0, 7.0, 8.0], &[0, 1]).unwrap();
        assert_eq!(receive_scatter(&mut eps[0], 2, Kind::Q).unwrap(), vec![5.0, 6.0]);
        assert_eq!(receive_scatter(&mut eps[1], 2, Kind::Q).unwrap(), vec![7.0, 8.0]);
    }

    #[test]
    fn scatter_rejects_uneven_vector() {
        let mut eps = sim_fabric(3, &DelaySchedule::zero(), Duration::from_secs(1));
        assert!(matches!(
            scatter(&mut eps[2], Kind::Q, 0, &[1.0, 2.0, 3.0], &[0, 1]),
            Err(NetError::Frame(FrameError::PayloadMismatch { .. }))
        ));
    }

    #[test]
    fn wrong_kind_is_reported() {
        let mut eps = sim_fabric(2, &DelaySchedule::zero(), Duration::from_secs(1));
        eps[0].send(1, Envelope::new(0, Kind::U, 0, 0, vec![1.0])).unwrap();
        assert!(matches!(expect(&mut eps[1], 0, Kind::V), Err(NetError::Unexpected { .. })));
    }
}
