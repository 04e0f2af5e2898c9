use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: Box<dyn std::error::Error + Send + Sync> },

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Model(#[from] hamlearn::Error),

    #[error("compare: {0}")]
    Compare(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source: Box::new(source) }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Config { path: path.to_path_buf(), message: message.into() }
    }
}
