//! Two-tier ("cloud-cluster") binary event detection.
//!
//! Noisy binary sensors are grouped into clusters. Each cluster fuses its
//! members' bits with a weighted likelihood-ratio test and forwards a
//! one-bit verdict to a fusion center whenever at least one member has a
//! link to it. The fusion center makes the Bayes-optimal decision from the
//! verdicts it received.
//!
//! The crate is split along the pipeline:
//!
//! - [`detection`]: domain types, decision rules and exact error
//!   probabilities at the cluster and fusion-center level.
//! - [`concentration`]: Lambert W, the improved Bennett tail bound and the
//!   cluster / fusion-center error bounds built on it.
//! - [`optimizer`]: threshold grids, line search, Gauss-Seidel coordinate
//!   descent and the exact-vs-bound method switch.
//! - [`simulator`]: a seedable Monte Carlo oracle for the full generative
//!   process.
//! - [`experiment`]: config-driven sweeps producing CSV curve data.

#![forbid(unsafe_code)]

pub mod concentration;
pub mod detection;
mod distribution;
pub mod error;
pub mod experiment;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
