//! Exact Gaussian-process regression.
//!
//! One independent GP is kept per function index: index 0 models the reward,
//! indices `1..=q` the constraints. The surrogate selector is realised by
//! dispatching on the index.

mod beta;
mod grid;
mod kernel;
mod model;
mod surrogate;

pub use beta::{beta, BetaSchedule};
pub use grid::GridPosterior;
pub use kernel::{kernel_eval, Kernel, KernelFamily};
pub use model::{posterior, GpModel};
pub use surrogate::{add_observation, SurrogateModel};
