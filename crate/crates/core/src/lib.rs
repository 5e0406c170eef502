//! Regularised FIR impulse-response estimation with kernel- and filter-based
//! penalties, cross-validated tuning, and a Monte Carlo benchmark harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod design;
pub mod error;
pub mod estimator;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod simulation;
pub mod spectrum;
pub mod tuning;

pub use error::{Error, Result};
