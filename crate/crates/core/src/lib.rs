//! Identification of noisy queries against a database of vector-quantized
//! enrollment words.
//!
//! The crate is organized bottom-up:
//!
//! - [`types`]: method-of-types calculus (distributions, empirical types, counting, sampling).
//! - [`ensemble`]: the random ensemble of lossy encoders and its diagnostics.
//! - [`simulation`]: memoryless source/channel sampling and the enrollment/identification trial.
//! - [`decoders`]: universal, MMI, approximate-ML and exact-ML decision rules.
//! - [`exponents`]: numerical evaluation of random-coding error exponents.
//! - [`harness`]: Monte Carlo estimation, diagnostics, configuration and result files.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod decoders;
pub mod ensemble;
pub mod harness;
pub mod exponents;
pub mod simulation;
pub mod types;

pub use error::{Error, Result};
