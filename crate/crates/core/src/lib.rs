// negated comparisons below deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiments;
pub mod harmonize;
pub mod metrics;
pub mod models;
pub mod seeds;
pub mod signal;
pub mod splits;
pub mod synth;
pub mod tables;

pub use error::{Error, ErrorKind, Result};
