use thiserror::Error;
use wgs_core::WgsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] WgsError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 2 configuration, 3 numerical abort, 4 size cap,
    /// 1 for I/O and verification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(WgsError::CapExceeded { .. }) => 4,
            CliError::Core(e) if e.is_numerical_abort() => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Verification(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
