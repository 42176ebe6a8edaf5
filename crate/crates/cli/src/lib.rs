//! Library side of the `rsgd` command-line tool: argument types, config
//! manifests, flag grammars, CSV schemas and the subcommands themselves.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod specs;
pub mod tables;

pub use error::{CliError, CliResult};
