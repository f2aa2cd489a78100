//! Federated Sinkhorn over a simulated or TCP message fabric.
//!
//! The `n` rows of the problem are split into `c` equal blocks, one per
//! client. Drivers exist for synchronous all-to-all (with optional local
//! iterations between exchanges), asynchronous all-to-all with damping, and
//! a synchronous star with a central server.

mod async_a2a;
mod error;
mod local;
mod params;
mod report;
mod runner;
mod star;
mod sync_a2a;

pub use async_a2a::{async_all_to_all_client, run_async_lockstep};
pub use error::FedError;
pub use local::ClientOutcome;
pub use params::{FedParams, Topology, TraceSpec, DEFAULT_ALPHA, DEFAULT_RECV_TIMEOUT_SECS};
pub use report::{MessageCounts, RunOutcome, RunReport, TauPair, TauReport, Timings, TracePoint};
pub use runner::{run, run_async_threaded, run_centralized, run_on, run_sync_all_to_all, run_sync_star, Backend};
pub use star::{star_client, star_server};
pub use sync_a2a::sync_all_to_all_client;
