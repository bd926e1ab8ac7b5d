use rad_core::RadError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or inputs; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A check or tolerance was breached; exit code 1.
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] RadError),
}

impl CliError {
    pub fn field(field: &str, message: impl std::fmt::Display) -> Self {
        Self::Config(format!("{field}: {message}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Check(_) | Self::Core(RadError::NonFinite { .. }) => 1,
            Self::Config(_) | Self::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
