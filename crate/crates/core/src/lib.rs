// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod forecast;
pub mod gwtest;
pub mod ingest;
pub mod irf;
pub mod linalg;
pub mod model;
pub mod period;
pub mod pgas;
pub mod priors;
pub mod risk;
pub mod rv;
pub mod sampler;
pub mod scoring;

pub use error::{Error, Result};
