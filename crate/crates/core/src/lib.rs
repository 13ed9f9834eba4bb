//! Near-field channel learning for hybrid-MIMO links with a uniform circular
//! array at the base station.
//!
//! The crate builds a Bessel-spaced concentric-ring codebook, synthesizes
//! spherical-wavefront multipath channels, simulates frame-wise analog pilot
//! sensing, and recovers the sparse beamspace channel with an
//! expectation-maximization sparse Bayesian learner (Ring Bayes) alongside
//! LS, OMP and M-FOCUSS baselines. The [`harness`] module runs seeded
//! Monte-Carlo NMSE / BER sweeps.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod sensing;
pub mod specfun;

pub use error::{Error, Result};
