use fedsink_core::partition::SliceError;
use fedsink_core::OtError;
use fedsink_net::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error("numeric failure on rank {rank}: {source}")]
    Numeric { rank: usize, source: OtError },
    #[error("fabric failure on rank {rank}: {source}")]
    Net { rank: usize, source: NetError },
    #[error("fabric setup: {0}")]
    Setup(NetError),
    #[error("rank {0} panicked")]
    Panic(usize),
}

impl FedError {
    /// Secondary failures (a peer vanishing because it failed first) rank
    /// below the root cause when several workers report errors.
    pub(crate) fn is_secondary(&self) -> bool {
        matches!(
            self,
            FedError::Net { source: NetError::PeerLost { .. } | NetError::Timeout { .. }, .. }
        )
    }

    pub fn is_backend(&self) -> bool {
        matches!(self, FedError::Net { .. } | FedError::Setup(_) | FedError::Panic(_))
    }
}

pub(crate) trait RankContext<T> {
    fn at(self, rank: usize) -> Result<T, FedError>;
}

impl<T> RankContext<T> for Result<T, NetError> {
    fn at(self, rank: usize) -> Result<T, FedError> {
        self.map_err(|source| FedError::Net { rank, source })
    }
}

impl<T> RankContext<T> for Result<T, OtError> {
    fn at(self, rank: usize) -> Result<T, FedError> {
        self.map_err(|source| FedError::Numeric { rank, source })
    }
}

/// Picks the most informative error among worker results.
pub(crate) fn root_cause(errors: Vec<FedError>) -> Option<FedError> {
    let mut errors = errors;
    let primary = errors.iter().position(|e| !e.is_secondary());
    match primary {
        Some(i) => Some(errors.swap_remove(i)),
        None => errors.into_iter().next(),
    }
}
