//! Return-time statistics for one-dimensional maps via first-return inducing.

// `!(x > 0.0)` rejects NaN along with the non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod inducing;
pub mod interval;
pub mod maps;
pub mod measures;
pub mod rng;
pub mod shift;
pub mod stats;

pub use error::{Error, Result};
