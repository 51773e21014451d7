//! Weighted branching processes and trees.
//!
//! Simulation of the linear processes W^(j) and R^(k), exact
//! Kantorovich-Rubinstein distances, coupling bounds between two trees,
//! convergence experiments and the configuration-model applications.

pub mod branching;
pub mod convergence;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod graphs;
pub mod measures;
pub mod stats;
pub mod stream;

pub use error::{Error, Result};
