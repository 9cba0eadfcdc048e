use thiserror::Error;

/// Errors produced anywhere in the tomography pipeline.
#[derive(Debug, Error)]
pub enum QptError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has a significantly negative eigenvalue {0:e}")]
    NotPositive(f64),

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid process matrix: {0}")]
    InvalidProcess(String),

    #[error("invalid POVM collection: {0}")]
    InvalidPovm(String),

    #[error("design is not informationally complete: {0}")]
    NotInformationallyComplete(String),

    #[error("unsupported dimension {d} for {what}")]
    UnsupportedDimension { what: &'static str, d: usize },

    #[error("negative probability {value:e} at ({row}, {col})")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    #[error("success operator is singular (min eigenvalue {0:e}); not enough data for the trace-preserving correction")]
    SingularSuccessOperator(f64),

    #[error("argument has zero trace")]
    ZeroTrace,

    #[error("dense oracle refuses d = {0} (limit is 3)")]
    OracleTooLarge(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QptError>;
