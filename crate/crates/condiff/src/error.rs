use std::path::Path;

/// Failure of a command, carrying the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing or unreadable data: {0}")]
    MissingData(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] condiff_core::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use condiff_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::MissingData(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Shape(_) => 5,
            CliError::Pairing(_) => 6,
            CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::Shape { .. }) => 5,
            CliError::Io { .. } | CliError::Core(_) | CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
