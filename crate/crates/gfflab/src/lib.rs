//! Experiment runner and verification harness for `gfflab-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod netspec;
pub mod parallel;
pub mod report;
pub mod stats;
pub mod svg;
pub mod verify;

pub use error::{Error, Result};
