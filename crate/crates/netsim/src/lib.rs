//! Message fabric for block-federated solvers.
//!
//! Two kinds of traffic share an [`Endpoint`]: blocking FIFO point-to-point
//! messages, on which the [`collective`] operations are built, and a
//! non-blocking mailbox that keeps only the newest envelope per
//! `(sender, kind)` stream and records each envelope's age in receiver
//! iterations. [`sim`] runs everything in-process with an iteration-unit
//! [`DelaySchedule`]; [`tcp`] speaks the framed wire format of [`frame`].

pub mod collective;
mod delay;
mod endpoint;
mod envelope;
pub mod frame;
pub mod sim;
mod stats;
pub mod tcp;

pub use collective::{all_gather, all_gather_blocks, expect, gather_from, receive_scatter, scatter};
pub use delay::{DelayModel, DelaySampler, DelaySchedule};
pub use endpoint::{Endpoint, NetError};
pub use envelope::{control, Envelope, Kind};
pub use frame::FrameError;
pub use sim::{sim_fabric, SimEndpoint, DEFAULT_RECV_TIMEOUT};
pub use stats::{FabricStats, TauAccumulator, TauSummary};
pub use tcp::{tcp_loopback, TcpEndpoint};
