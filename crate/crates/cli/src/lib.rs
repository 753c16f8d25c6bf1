//! Batch front end for the `semistatic` library: quote ingestion, run
//! configuration and the subcommands of the `semistatic` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use commands::{run, Cli, Command, Outcome};
pub use config::RunConfig;
pub use error::{CliError, Result};
