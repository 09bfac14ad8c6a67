//! Command-line front end of the hybrid visual servoing simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod trace_io;

pub use config::{parse_config, parse_override, RunConfig};
pub use error::{CliError, Result};
