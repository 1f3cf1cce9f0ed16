//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}, column {column:?}: cannot parse {token:?} as a number")]
    Parse {
        row: usize,
        column: String,
        token: String,
    },

    #[error("duplicate key: entity {entity:?} appears twice for time {time}")]
    DuplicateKey { entity: String, time: f64 },

    #[error("missing cell at row {row}, column {column:?}")]
    MissingCell { row: usize, column: String },

    #[error("target variance is zero: {0}")]
    ZeroVariance(String),

    #[error("all kernel weights vanished; increase kernel_width (currently {width})")]
    KernelTooNarrow { width: f64 },

    #[error("hyperparameter search finished without a completed trial: {0}")]
    SearchFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
