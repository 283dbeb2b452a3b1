//! Optimal consumption under a stochastic clock.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod finite_market;
pub mod logou;
pub mod optim;
pub mod ou_clock;
pub mod quad;
pub mod specfun;
pub mod utility;

pub use error::{Error, Result};
