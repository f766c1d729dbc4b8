use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible; names both shapes.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// A configuration value or argument is outside its legal range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a documented precondition.
    #[error("invalid data: {0}")]
    Data(String),

    /// The caller broke an API contract (e.g. backward from a non-scalar root).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced or met a non-finite or degenerate value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file does not match the expected layout.
    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Dimension {
        op,
        lhs: format!("{}x{}", lhs.0, lhs.1),
        rhs: format!("{}x{}", rhs.0, rhs.1),
    }
}
