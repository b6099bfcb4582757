use thiserror::Error;

/// Errors raised by case handling, problem construction and analysis drivers.
#[derive(Debug, Error)]
pub enum FlexError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("too many switchable lines for enumeration ({count} > cap {cap})")]
    TooManySwitches { count: usize, cap: usize },
    #[error("configuration {0} leaves buses isolated from the reference bus")]
    Disconnected(String),
    #[error("unknown configuration label {0:?}")]
    UnknownConfiguration(String),
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("input vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("boundary trace failed for {config}: {details}")]
    TraceFailure { config: String, details: String },
    #[error("self-intersecting polygon: segment {first} crosses segment {second}")]
    SelfIntersecting { first: usize, second: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("numerical failure at P={p_mw} MW, Q={q_mvar} MVAr: {details}")]
    NumericFailure {
        p_mw: f64,
        q_mvar: f64,
        details: String,
    },
}

pub type Result<T> = std::result::Result<T, FlexError>;
