use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} exceeds the {max} points supported by the generator")]
    TooManyPoints { index: u64, max: u64 },

    #[error("requested {requested} dimensions but the generator only has {available}")]
    TooManyDimensions { requested: usize, available: usize },

    #[error("malformed generator data at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ill-conditioned Gram matrix: eigenvalue ratio {ratio:e}")]
    IllConditioned { ratio: f64 },

    #[error("kernel family does not match the point sequence ({0})")]
    KernelSequenceMismatch(&'static str),

    #[error("budget {budget} cannot cover the initial sample sizes (cost {needed})")]
    BudgetTooSmall { budget: f64, needed: f64 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("no records to summarize")]
    EmptyRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
