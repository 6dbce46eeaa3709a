//! Experiment orchestration for two-scale Hamilton-Jacobi homogenization:
//! configuration, the subcommand pipelines, manifests and the acceptance
//! suite.

// Negated comparisons route NaN into the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
