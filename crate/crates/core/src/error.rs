use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum HsmmError {
    /// An argument lies outside the domain of a distribution or function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A segmentation or parameter set is structurally inconsistent with the data.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("index {index} out of range (length {len})")]
    Index { index: usize, len: usize },

    /// No segmentation has finite likelihood under the current parameters.
    #[error("infeasible decoding: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a validation rule.
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },

    #[error("schema error: missing column `{0}`")]
    Schema(String),

    /// A covariance matrix could not be inverted.
    #[error("singular within-chain covariance; offending dimensions {dims:?}")]
    Singular { dims: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HsmmError> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> HsmmError {
    HsmmError::Domain(msg.into())
}

pub(crate) fn structure(msg: impl Into<String>) -> HsmmError {
    HsmmError::Structure(msg.into())
}
