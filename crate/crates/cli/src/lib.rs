//! Pipeline orchestration for the `glycofde` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run_pipeline, run_stage, Context, Stage};
pub use config::{Method, Overrides, PipelineConfig};
pub use error::{CliError, Result};
