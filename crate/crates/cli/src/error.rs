use std::path::PathBuf;

use thiserror::Error;

/// Problems with a manifest or model file, independent of the command that
/// hit them.
#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },

    #[error("cannot parse model {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("inconsistent model: {0}")]
    Inconsistent(String),

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: objprop::Error,
    },
}

/// A failed command, tagged with the stage that failed. Each stage maps to
/// its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Training(_) => 3,
            CliError::Inference(_) => 4,
            CliError::Evaluation(_) => 5,
        }
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn training(e: impl std::fmt::Display) -> Self {
        CliError::Training(e.to_string())
    }

    pub fn inference(e: impl std::fmt::Display) -> Self {
        CliError::Inference(e.to_string())
    }

    pub fn evaluation(e: impl std::fmt::Display) -> Self {
        CliError::Evaluation(e.to_string())
    }
}
