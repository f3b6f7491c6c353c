use thiserror::Error;

/// Errors produced by mesh loading, operator assembly, and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange {
        path: String,
        line: usize,
        index: i64,
        count: usize,
    },

    #[error("{path}: malformed header: {msg}")]
    MalformedHeader { path: String, msg: String },

    #[error("{path}: unsupported property: {msg}")]
    UnsupportedProperty { path: String, msg: String },

    #[error("{path}: malformed body: {msg}")]
    Malformed { path: String, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),

    #[error("zero diagonal entry at level {level}, row {index}")]
    ZeroDiagonalAtLevel { level: usize, index: usize },

    #[error("matrix not positive definite (pivot {pivot:.3e} in row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("graph has no edges")]
    EmptyEdgeSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mass-weighted norm requested but no mass diagonal is available")]
    MissingMassDiagonal,
}

pub type Result<T> = std::result::Result<T, Error>;
