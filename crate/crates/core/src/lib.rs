#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod parametrix;
pub mod quantize;
pub mod report;
pub mod states;
pub mod suites;
pub mod symbol;

pub use error::{Error, Result};
