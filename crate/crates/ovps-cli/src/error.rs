//! CLI error taxonomy mapped onto scriptable exit codes.

use thiserror::Error;

/// Exit code for configuration and input-validation failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for data errors while reading or processing inputs.
pub const EXIT_DATA: i32 = 3;
/// Exit code for failed numerical checks (gradient verification).
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn validation(msg: String) -> Self {
        Self::Validation(msg)
    }

    pub fn data(msg: String) -> Self {
        Self::Data(msg)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Data(_) => EXIT_DATA,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ovps_core::Error> for CliError {
    fn from(e: ovps_core::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<crate::npy::NpyError> for CliError {
    fn from(e: crate::npy::NpyError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(format!("json error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
