#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dag;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod npsem;
pub mod pipelines;
pub mod prob;
pub mod relabel;
pub mod report;
pub mod cli;
pub mod spectral;

pub use error::{Error, Result};
