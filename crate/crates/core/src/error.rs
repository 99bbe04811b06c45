use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CssError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("response column {0:?} not found in header")]
    MissingResponse(String),

    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("the response is constant")]
    ConstantResponse,

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} is singular (condition number {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("kernel density denominator underflowed for bandwidth h = {bandwidth}")]
    BandwidthUnderflow { bandwidth: f64 },

    #[error("basis matrix is not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
}

pub type Result<T> = std::result::Result<T, CssError>;
