use thiserror::Error;

use crate::envelope::{Envelope, Kind};
use crate::frame::FrameError;
use crate::stats::FabricStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("peer {peer} lost")]
    PeerLost { peer: usize },
    #[error("timed out waiting for peer {peer}")]
    Timeout { peer: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("expected {expected} from peer {peer}, got {got}")]
    Unexpected { peer: usize, expected: Kind, got: Kind },
    #[error("rank {rank} outside fabric of size {size}")]
    BadRank { rank: usize, size: usize },
    #[error("mailbox full")]
    BackpressureDropped,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> Self {
        NetError::Io(e.to_string())
    }
}

/// One participant's handle on the fabric. Point-to-point `send`/`recv` are
/// FIFO per link and blocking; the mailbox side never blocks.
pub trait Endpoint: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;

    fn send(&mut self, to: usize, env: Envelope) -> Result<(), NetError>;
    fn recv(&mut self, from: usize) -> Result<Envelope, NetError>;

    /// Posts `env` to every other participant's mailbox.
    fn post_broadcast(&mut self, env: Envelope) -> Result<(), NetError>;
    /// Deliverable envelopes, newest per `(sender, kind)`, in sender then
    /// kind order. Records one age sample per envelope.
    fn drain_mailbox(&mut self) -> Result<Vec<Envelope>, NetError>;

    /// Local iteration clock used for delays and message ages.
    fn iteration(&self) -> u64;
    fn advance_iteration(&mut self);

    /// Brackets mailbox traffic for backends that share one link between
    /// both kinds of traffic.
    fn begin_async(&mut self) -> Result<(), NetError> {
        Ok(())
    }
    fn end_async(&mut self) -> Result<(), NetError> {
        Ok(())
    }

    fn stats(&self) -> &FabricStats;
}

impl<E: Endpoint + ?Sized> Endpoint for Box<E> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn size(&self) -> usize {
        (**self).size()
    }
    fn send(&mut self, to: usize, env: Envelope) -> Result<(), NetError> {
        (**self).send(to, env)
    }
    fn recv(&mut self, from: usize) -> Result<Envelope, NetError> {
        (**self).recv(from)
    }
    fn post_broadcast(&mut self, env: Envelope) -> Result<(), NetError> {
        (**self).post_broadcast(env)
    }
    fn drain_mailbox(&mut self) -> Result<Vec<Envelope>, NetError> {
        (**self).drain_mailbox()
    }
    fn iteration(&self) -> u64 {
        (**self).iteration()
    }
    fn advance_iteration(&mut self) {
        (**self).advance_iteration()
    }
    fn begin_async(&mut self) -> Result<(), NetError> {
        (**self).begin_async()
    }
    fn end_async(&mut self) -> Result<(), NetError> {
        (**self).end_async()
    }
    fn stats(&self) -> &FabricStats {
        (**self).stats()
    }
}

pub(crate) fn check_peer(peer: usize, size: usize) -> Result<(), NetError> {
    if peer >= size {
        return Err(NetError::BadRank { rank: peer, size });
    }
    Ok(())
}
