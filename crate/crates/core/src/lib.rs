//! Domain aggregation for multi-source domain adaptation.
//!
//! The crate is organised around the weight projection that turns per-domain
//! scores into a point on the probability simplex:
//!
//! - [`simplex`]: the L2-regularised simplex projection, its threshold search,
//!   Jacobian and Jacobian-vector product, plus sparsemax/softmax baselines.
//! - [`discrepancy`]: source/target discrepancy estimators (domain classifier
//!   surrogate and second-moment spectral norm via power iteration).
//! - [`nn`]: a small dense network engine with explicit backward passes,
//!   gradient reversal, optimizers and checkpoints.
//! - [`data`]: synthetic multi-source benchmarks, a sparse text loader and
//!   seeded mini-batch iteration.
//! - [`trainer`]: the multi-source training loop and its log.
//! - [`cli`]: the config-driven experiment runner and the `verify` suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod discrepancy;
pub mod error;
pub mod nn;
pub mod simplex;
pub mod trainer;

pub use error::{DarnError, Result};
