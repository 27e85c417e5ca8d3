//! Globally safe Bayesian optimization for policy search on dynamical systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`gp`]: exact Gaussian-process regression and the per-index surrogate.
//! - [`domain`]: the finite parameter × initial-condition grid.
//! - [`safeset`]: confidence bookkeeping and the safe set, border, expanders
//!   and maximizers derived from it.
//! - [`simulate`]: dynamical systems, RK4 integration and monitored rollouts
//!   with backup-policy switching.
//! - [`optimizer`]: the three-stage acquisition loop.
//! - [`oracle`]: brute-force reachability references (feature `oracle`).
//! - [`config`] and [`runner`]: experiment configuration, run logs and exports.
//!
//! Interchangeable pieces (benchmark systems, acquisition rules, interrupt
//! rules) sit behind traits and are looked up by name in registries, so a
//! configuration file can select them at runtime.

pub mod config;
pub mod domain;
mod error;
pub mod gp;
pub mod optimizer;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod registry;
pub mod runner;
pub mod safeset;
pub mod simulate;

pub use error::{Error, Result};
