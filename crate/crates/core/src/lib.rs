//! Entropy-regularized optimal transport by Sinkhorn scaling.
//!
//! The numerical kernel is generic over [`Scalar`]; `f64` is the working
//! precision, `f32` is supported, and [`ExtFloat`] extends the exponent
//! range for very small regularization where `exp(-C/ε)` leaves the `f64`
//! range. The `*64` and `*Ext` aliases below name the common instantiations.

pub mod container;
mod error;
mod ext_float;
pub mod kernel;
pub mod partition;
mod problem;
mod scalar;
pub mod solve;
pub mod stop;
pub mod synth;

pub use error::{OtError, PartitionError};
pub use ext_float::ExtFloat;
pub use kernel::{
    damped_combine, gibbs_kernel, half_step_u, half_step_v, marginal_errors, objective, transport_plan, GibbsKernel,
    MarginalErrors,
};
pub use partition::{assemble, assemble_rows, slice_problem, BlockView};
pub use problem::{Problem, ScalingState};
pub use scalar::Scalar;
pub use solve::{solve_centralized, solve_centralized_with, SolveResult};
pub use stop::{evaluate_stop, StopPolicy, Verdict};
pub use synth::{generate, CondClass, GenSpec};

pub type Problem64 = Problem<f64>;
pub type ProblemExt = Problem<ExtFloat>;
pub type ScalingState64 = ScalingState<f64>;
pub type SolveResult64 = SolveResult<f64>;
pub type SolveResultExt = SolveResult<ExtFloat>;
pub type GibbsKernel64 = GibbsKernel<f64>;
pub type BlockView64 = BlockView<f64>;
