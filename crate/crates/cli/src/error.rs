use std::path::Path;

use thiserror::Error;

/// Pipeline failures, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for unreadable or inconsistent data,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<semfocus_core::Error> for CliError {
    fn from(e: semfocus_core::Error) -> Self {
        match e {
            semfocus_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
