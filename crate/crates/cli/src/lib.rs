//! Batch front end: configuration, sweeps, result files and their analysis.

pub mod analysis;
pub mod config;
pub mod error;
pub mod rows;
pub mod run;

pub use error::{CliError, CliResult};
