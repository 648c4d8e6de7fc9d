//! Decentralized eigendecomposition of a distributed sample covariance matrix
//! by averaging consensus, the decentralized ESPRIT direction-of-arrival
//! estimator built on top of it, and closed-form second-order predictors for
//! both.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`]: topologies, consensus weight matrices and the raw averaging
//!   consensus iteration.
//! * [`array_model`]: partly calibrated subarray geometry, snapshot synthesis,
//!   covariances and Hermitian eigendecomposition.
//! * [`dpm`]: the decentralized power method, simulated message by message, and
//!   its equivalent centralized covariance.
//! * [`perf`]: eigenvector error statistics of the decentralized power method.
//! * [`esprit`]: centralized and decentralized ESPRIT.
//! * [`esprit_mse`]: analytical DOA mean square error of decentralized ESPRIT.
//! * [`harness`]: Monte Carlo runner, configuration files and result output.

pub mod array_model;
pub mod dpm;
pub mod error;
pub mod esprit;
pub mod esprit_mse;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod perf;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
