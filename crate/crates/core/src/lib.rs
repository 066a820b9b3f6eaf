// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod cli;
pub mod dataset;
pub mod distrib;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod logit;
pub mod ratio_ci;
pub mod regress;
pub mod report;
pub mod sensitivity;
pub mod simulate;

pub use error::{Error, Result};
