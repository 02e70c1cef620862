use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),

    #[error("line {line}: field `{field}`: {message}")]
    Record {
        line: u64,
        field: &'static str,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] qnd_core::Error),

    #[error("{0} check(s) failed")]
    CheckFailed(usize),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for bad or
    /// missing data, 4 when `analyze --check` finds a failing statistic.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Record { .. } | Self::Data(_) | Self::Io { .. } | Self::Model(_) => 3,
            Self::CheckFailed(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
