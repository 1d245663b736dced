//! Command-line driver for the information disclosure game engine.
//!
//! Each subcommand reads a JSON [`RunConfig`], runs to completion in memory
//! and then writes its outputs atomically. While writing, the output
//! directory holds an `INCOMPLETE` marker that is removed on success.

pub mod commands;
pub mod config;

pub use commands::{cmd_grid, cmd_metrics, cmd_shapley, cmd_simulate, cmd_synth};
pub use config::{DatasetSource, GridSpec, PolicySpec, RunConfig, SplitSpec};
