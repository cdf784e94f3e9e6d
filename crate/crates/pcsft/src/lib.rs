//! Numerical workbench for prequantum classical statistical field theory
//! (PCSFT) over finite-dimensional real Hilbert spaces.
//!
//! A bipartite quantum state determines a block covariance operator on
//! `H1 x H2`; the associated zero-mean Gaussian random field reproduces
//! quantum averages and correlations through quadratic forms, after
//! calibrating away a white-noise background. This crate builds those
//! covariances, samples the fields, and checks every correspondence identity
//! both algebraically and by Monte Carlo, including the entanglement
//! criterion: the background-free covariance is positive semidefinite iff the
//! state factorizes.

pub mod correlation;
pub mod covariance;
pub mod error;
pub mod hilbert;
pub mod oracle;
mod rng;
pub mod sampling;
mod svd;

pub use error::{Error, Result};
pub use hilbert::{BipartiteState, HVector, SchmidtForm, Side, SymOperator};
