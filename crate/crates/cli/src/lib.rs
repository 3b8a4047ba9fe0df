//! Command-line runner for the ISAC extended-target tracker: configuration,
//! dataset and checkpoint files, and the `gen-data`, `train`, `track`,
//! `eval`, `grad-check` and `calibrate-p0` commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod tracks;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;
