use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    /// A numeric procedure failed to produce a usable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::DegenerateCovariance(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
