//! Boltzmann-prior discrete variational autoencoder with classical
//! negative-phase samplers, Ising benchmarks, and single-cell evaluation
//! metrics.

pub mod dataio;
pub mod energy;
pub mod error;
pub mod model;
pub mod reparam;
pub mod rng;
pub mod samplers;
pub mod scmetrics;

pub use error::{Error, Result};
