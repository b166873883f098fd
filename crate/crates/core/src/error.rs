use std::path::PathBuf;

use thiserror::Error;

use crate::policy::Command;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownConfigKey { key: String, suggestion: Option<String> },

    #[error("invalid config value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("scenario generation failed: {0}")]
    Scenario(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("checkpoint error in `{field}`: {message}")]
    Checkpoint { field: String, message: String },

    #[error("demonstration buffer for {0:?} is empty")]
    EmptyBuffer(Command),

    #[error("training diverged at step {step}: loss = {loss}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("no trial results to aggregate")]
    EmptyResults,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { key: key.into(), reason: reason.into() }
    }

    /// True for errors caused by user-provided configuration rather than
    /// runtime failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownConfigKey { .. } | Error::InvalidConfig { .. } | Error::EmptyBuffer(_)
        )
    }
}
