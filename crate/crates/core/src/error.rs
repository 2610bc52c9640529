use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid affine map: {0}")]
    InvalidTransform(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Gradient requested exactly at the knot of an active hinge.
    #[error("gradient undefined: input {input} sits exactly on knot {knot}")]
    AtKnot { input: usize, knot: f64 },

    #[error("{function}({args:?}) did not converge within {iterations} iterations")]
    NoConvergence {
        function: &'static str,
        args: Vec<f64>,
        iterations: usize,
    },

    #[error("prior is incompatible with the model input transform: {0}")]
    IncompatiblePrior(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error(
        "matrix is not positive semi-definite (eigenvalue {eigenvalue:e}, largest {largest:e})"
    )]
    NotPsd { eigenvalue: f64, largest: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error("unsupported file version {found} (supported major {supported})")]
    Version { found: String, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
