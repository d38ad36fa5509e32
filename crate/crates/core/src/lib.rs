// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coxloss;
pub mod data;
pub mod dro;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{Error, Result};
