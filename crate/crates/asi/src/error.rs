use std::path::PathBuf;

use asi_core::Termination;

/// Process exit codes. Stable; documented in the README.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const STALENESS: i32 = 4;
    pub const IO: i32 = 5;
    pub const NOT_CONVERGED: i32 = 6;
    pub const AUDIT_FAILED: i32 = 7;
    pub const RETRY_CAP: i32 = 8;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] asi_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => exit::CONFIG,
            AppError::Core(asi_core::Error::StalenessViolation { .. }) => exit::STALENESS,
            AppError::Core(_) => exit::CONFIG,
            AppError::Io { .. } | AppError::Parse { .. } | AppError::Json(_) | AppError::Csv(_) => {
                exit::IO
            }
        }
    }
}

pub fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => exit::OK,
        Termination::MaxEpochs => exit::NOT_CONVERGED,
        Termination::Diverged => exit::DIVERGED,
        Termination::StalenessViolation => exit::STALENESS,
        Termination::RetryCapExceeded => exit::RETRY_CAP,
    }
}
