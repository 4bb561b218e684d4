use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Bad or missing input: configs, event logs, state, policy files.
    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("writing {}: {e}", path.display()))
    }
}

impl From<adscope_core::error::Error> for CliError {
    fn from(e: adscope_core::error::Error) -> Self {
        use adscope_core::error::Error as E;
        match e {
            E::BudgetExceeded { .. } | E::Lp(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
