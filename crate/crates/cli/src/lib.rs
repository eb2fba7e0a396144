//! Library surface of the command-line driver, exposed so integration tests
//! can call the commands directly.

pub mod commands;
pub mod config;
pub mod report;
pub mod store;

pub use commands::{cmd_compare, cmd_preload, cmd_report, cmd_sweep, CmdError};
pub use config::BenchmarkConfig;
