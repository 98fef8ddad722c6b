use std::path::PathBuf;

use oat_core::OatError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] OatError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Format { path: String, source: OatError },

    /// A verification check missed its tolerance.
    #[error("verification failed: {0}")]
    Check(String),

    /// A closed form was applied outside its approximation regime.
    #[error("{0}")]
    Regime(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 0 success, 1 validation, 2 numeric or regime, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Check(_) => 1,
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::Core(_) => 1,
            CliError::Regime(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }
}
