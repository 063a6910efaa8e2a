//! Orchestration for the `wgs` command-line tool: configuration, result
//! logs, and the individual subcommands.

pub mod bench;
pub mod config;
pub mod error;
pub mod export;
pub mod logfile;
pub mod run;
pub mod suite;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
