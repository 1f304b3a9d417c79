//! Command-line surface: configuration parsing, subcommand dispatch, CSV
//! emission. The binary in `main.rs` is a thin wrapper over [`run::run`] so
//! integration tests can drive the same code path in-process.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use run::{run, Overrides, Subcommand};
