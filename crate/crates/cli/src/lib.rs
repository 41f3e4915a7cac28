//! Command implementations behind the `toolseq` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::Config;
pub use error::CliError;
