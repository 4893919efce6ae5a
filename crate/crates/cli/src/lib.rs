//! Command implementations behind the `exchtail` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use exchtail_core::Error as CoreError;
use thiserror::Error;

pub use config::{Overrides, RunConfig};
pub use output::Table;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("numerical failure: {0}")]
    Numerical(CoreError),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Budget(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::VerifyFailed(_) => EXIT_VERIFY_FAILED,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Domain(m) => CliError::Config(m),
            CoreError::FormMismatch { .. } | CoreError::DegeneratePartition { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
