use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("{path}: {reason}")]
    Syntax { path: PathBuf, reason: String },

    #[error("invalid sweep: {0}")]
    Sweep(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] ddcrb_core::Error),
}

impl CliError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::InvalidValue {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for numerical/model failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(_) => 2,
            _ => 1,
        }
    }
}

/// Core domain errors raised while validating a scenario are reported as
/// configuration errors against the offending key.
pub(crate) fn as_config_error(err: ddcrb_core::Error) -> CliError {
    match err {
        ddcrb_core::Error::Domain { field, reason } => CliError::invalid(field, reason),
        other => CliError::Model(other),
    }
}
