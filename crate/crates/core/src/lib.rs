//! Simulation and numerics laboratory for biased zero-temperature coarsening.
//!
//! The crate provides exact continuous-time simulators (Glauber dynamics and
//! the asymmetric simple exclusion process), modified bootstrap percolation,
//! the large-deviation rate function of the ASEP current, a Fredholm
//! determinant evaluator for the exact particle-position law, block
//! renormalisation arithmetic, and replicated experiment drivers.

pub mod asep;
pub mod bootstrap;
pub mod error;
pub mod experiments;
pub mod fredholm;
pub mod glauber;
pub mod lattice;
pub mod rate;
pub mod renorm;
pub mod rng;
pub mod stats;
pub mod tower;

pub use error::{Error, Result};
