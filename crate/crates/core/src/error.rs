use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infinite privacy loss: noise multiplier is zero")]
    InfinitePrivacyLoss,

    #[error("target epsilon {target} unreachable for sigma in [{lo}, {hi}]")]
    CalibrationRange { target: f64, lo: f64, hi: f64 },

    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("metric undefined: group '{group}' has zero label prior")]
    UndefinedMetric { group: String },

    #[error("group '{group}' has {count} samples, at least 10 are required")]
    TooSmallGroup { group: String, count: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable reason code, used when a sweep row fails.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Precondition(_) => "precondition",
            Error::InfinitePrivacyLoss => "infinite_privacy_loss",
            Error::CalibrationRange { .. } => "calibration_range",
            Error::Divergence { .. } => "divergence",
            Error::UndefinedMetric { .. } => "undefined_metric",
            Error::TooSmallGroup { .. } => "too_small_group",
            Error::EmptyDataset => "empty_dataset",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
