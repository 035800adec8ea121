//! Line searches and first-order optimizers for smooth L2-regularized
//! losses, evaluated over a sharded dataset with simulated aggregation.
//!
//! The polynomial expansion line search ([`linesearch::pels_line_search`])
//! replaces repeated value+gradient passes with passes that return only the
//! `d + 1` Taylor coefficients of the loss along the search direction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod linesearch;
pub mod losses;
pub mod numerics;
pub mod optimizer;
pub mod report;

pub use error::{Error, Result};
