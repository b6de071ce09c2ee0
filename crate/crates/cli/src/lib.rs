//! File formats and commands behind the `vrp-ols` binary.

pub mod commands;
pub mod error;
pub mod problem;
pub mod report;

pub use commands::Input;
pub use error::CliError;
pub use report::Report;
