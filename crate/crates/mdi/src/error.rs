use std::path::PathBuf;

/// Errors of the IO layer and the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum MdiError {
    #[error(transparent)]
    Core(#[from] mdi_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error("CSV ingestion failed: {0}")]
    Csv(String),
    #[error("JSON error in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl MdiError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MdiError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            MdiError::Config(_) => 2,
            MdiError::Core(e) if e.is_config() => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = MdiError> = std::result::Result<T, E>;
