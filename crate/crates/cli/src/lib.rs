//! Library side of the `rad` command-line tool.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{resolve, Overrides, Profile, RunConfig};
pub use error::{CliError, CliResult};
