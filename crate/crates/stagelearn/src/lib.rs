//! Experiment runner for `stagelearn-core`: configuration files, payoff
//! matrix files, CSV output and the `stagelearn` command line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod matrix_file;
pub mod output;
pub mod runner;

pub use config::{Experiment, RawConfig};
pub use error::{CliError, Result};
