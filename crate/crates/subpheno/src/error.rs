//! Crate-wide error type.
//!
//! Variants are grouped so the command-line wrapper can map them onto
//! process exit codes: configuration problems (2), data problems (3) and
//! model-fitting failures (4).

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing input file: {0}")]
    MissingFile(PathBuf),

    #[error("missing column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("no parseable rows in {0}")]
    EmptyInput(PathBuf),

    #[error("data error: {0}")]
    Data(String),

    #[error("column `{0}` has no observed values")]
    FullyMissingColumn(String),

    #[error("column `{0}` is constant; cannot fit a power transform")]
    ConstantColumn(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("both classes must be present (got {positives} positives / {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("component {component} collapsed (soft count {count:.2} below floor {floor})")]
    EmptyComponent {
        component: usize,
        count: f64,
        floor: f64,
    },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("covariance for component {0} is not positive definite")]
    NotPositiveDefinite(usize),

    #[error("bootstrap redraw budget exhausted after {0} attempts")]
    RedrawBudget(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 fit failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingFile(_)
            | Error::MissingColumn { .. }
            | Error::EmptyInput(_)
            | Error::Data(_)
            | Error::FullyMissingColumn(_)
            | Error::ConstantColumn(_)
            | Error::DimensionMismatch { .. }
            | Error::SingleClass { .. }
            | Error::Io { .. }
            | Error::Csv { .. }
            | Error::Serde(_) => 3,
            Error::EmptyComponent { .. }
            | Error::FitFailed(_)
            | Error::NotPositiveDefinite(_)
            | Error::RedrawBudget(_) => 4,
        }
    }
}
