//! Command-line driver for the data-agent engine: configuration, dataset
//! generation, single runs, strategy × seed benches, reporting and the
//! oracle suites.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data or IO
//! error, 4 propcheck failure.

pub mod command;
pub mod config;
pub mod error;
pub mod harness;
pub mod propcheck;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
