use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] keyplan_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        use keyplan_core::Error as E;
        match self {
            CliError::Core(E::ConfigMismatch { .. }) => "config_mismatch",
            CliError::Core(E::EmptyDataset) => "empty_dataset",
            CliError::Core(E::Checkpoint(_)) | CliError::Core(E::MissingParam(_)) => "checkpoint",
            CliError::Core(E::InvalidArgument(_)) => "invalid_argument",
            CliError::Core(_) => "computation",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Usage(_) => "usage",
        }
    }

    /// Machine-readable form printed by the CLI on failure.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Core(keyplan_core::Error::ConfigMismatch { what, expected, got }) => {
                v["what"] = json!(what);
                v["expected"] = json!(expected);
                v["got"] = json!(got);
            }
            CliError::Io { path, .. } | CliError::Format { path, .. } => {
                v["path"] = json!(path);
            }
            _ => {}
        }
        v
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
