//! Batch Bayesian optimization with the parallel knowledge gradient.
//!
//! The crate is organised bottom-up:
//!
//! - [`gp`]: Gaussian-process regression with an ARD Matérn 5/2 kernel,
//!   jittered Cholesky factorization and its derivative, and maximum-likelihood
//!   hyperparameter fitting.
//! - [`sampling`]: box domains, Latin hypercube designs and the finite
//!   discretization built from posterior-minimum samples.
//! - [`acquisition`]: Monte-Carlo q-KG (value, pathwise gradient, asynchronous
//!   variant) and the qEI / GP-BUCB / GP-UCB-PE baselines.
//! - [`optimizer`]: multi-start projected stochastic gradient ascent.
//! - [`bench`]: synthetic objectives and the full optimization loop.
//! - [`experiment`]: configuration files, CSV output and the command set used
//!   by the `qkg` binary.

pub mod acquisition;
pub mod bench;
mod error;
pub mod experiment;
pub mod gp;
pub mod optimizer;
pub mod sampling;
pub mod selftest;

pub use error::{Error, Result};
