use std::path::PathBuf;

use distill_lab_core::Error as CoreError;

use crate::store_io::StoreError;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("refusing to overwrite {path}: {reason}; pass --force to replace it")]
    Refused { path: PathBuf, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Core(CoreError),
}

impl LabError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Refused { .. } => 2,
            LabError::MissingArtifact(_) => 3,
            LabError::Store(StoreError::Fingerprint { .. }) => 3,
            LabError::Divergence(_) => 4,
            _ => 1,
        }
    }

    pub fn missing(what: &str, path: &std::path::Path) -> Self {
        LabError::MissingArtifact(format!("{what} (expected at {})", path.display()))
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        LabError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<CoreError> for LabError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::InvalidConfig(msg) => LabError::Config(msg),
            CoreError::OutOfRange { .. } => LabError::Config(err.to_string()),
            CoreError::NonFinite { .. } | CoreError::Diverged { .. } => LabError::Divergence(err.to_string()),
            CoreError::MissingArtifact(what) => LabError::MissingArtifact(what.into()),
            other => LabError::Core(other),
        }
    }
}
