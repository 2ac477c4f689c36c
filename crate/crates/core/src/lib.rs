//! Simulation laboratory for weak-to-strong generalization of minimum-norm
//! interpolating linear classifiers on bi-level spiked Gaussian data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod interpolator;
pub mod linalg;
pub mod normal;
pub mod pipeline;
pub mod regimes;
pub mod rng;
pub mod stats;
pub mod tails;

pub use error::{Error, Result};
