//! Graph Laplace operators with Gaussian kernels on compact surfaces, and the
//! inverse pipeline that reads the metric, the sampling density and the
//! sampling measure back off an assembled operator.
//!
//! Modules, bottom up:
//!
//! - [`geometry`]: closed-form metrics, geodesic distances and embeddings.
//! - [`discretization`]: quadrature grids, densities and a rejection sampler.
//! - [`operators`]: continuous (dense or matrix-free) and sample-based operators.
//! - [`identify`]: recovery of masses, kernel, distances, metric and density.
//! - [`verify`]: executable scenarios with pass/fail thresholds.
//! - [`matfile`]: binary and CSV matrix files.

// `!(x > 0.0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretization;
pub mod error;
pub mod geometry;
pub mod identify;
pub mod matfile;
pub mod operators;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};

/// Version string echoed in every emitted file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
