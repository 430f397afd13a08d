use tablesim_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or usage.
    #[error("{0}")]
    Config(String),
    /// Input data that cannot be used.
    #[error("{0}")]
    Data(String),
    /// A broken internal invariant.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Tensor(t) => CliError::Internal(t.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
