//! Experiment harness for the `lfvi` library: configuration parsing and the
//! `simulate`, `infer`, `classify`, `seq` and `diagnose` subcommands.

pub mod config;
pub mod run;

pub use config::{parse_config, split_args, ConfigError, RunConfig};
pub use run::{run, RunError};
