//! Library side of the `qcframe` binary: configuration merging and the
//! subcommand implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

pub use commands::{exit, run, CliError, VERSION};
pub use config::{parse_radii, Overrides, RunConfig};
