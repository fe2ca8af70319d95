//! Command-line front end: synthetic studies, sounding and line inversions,
//! and report export.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
