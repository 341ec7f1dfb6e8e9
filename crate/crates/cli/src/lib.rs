//! Scenario loading, result persistence and plot emission around the
//! memsplit solver core. The binary (`memsplit`) wires these into the
//! `simulate` / `compare` / `validate` subcommands.

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

/// Exit-code contract: 0 success, 1 runtime failure (divergence, comparison
/// mismatch, I/O), 2 usage or configuration error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Run(_) => 1,
        }
    }
}
