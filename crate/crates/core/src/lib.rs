// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod format;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod reconstruct;
pub mod regularizer;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
