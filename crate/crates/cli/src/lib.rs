//! File formats, run configuration and subcommand drivers for the `mmm`
//! binary. Everything numerical lives in `mmm_core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, ErrorCode};
