use thiserror::Error;

pub type Result<T> = std::result::Result<T, HtnError>;

#[derive(Debug, Error)]
pub enum HtnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contraction error: axis {axis_a} of a has length {len_a}, axis {axis_b} of b has length {len_b}")]
    Contraction {
        axis_a: usize,
        axis_b: usize,
        len_a: usize,
        len_b: usize,
    },

    #[error("isometry direction violated: input dimension {input} exceeds output dimension {output}")]
    IsometryDirection { input: usize, output: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("feature value {value} at index {index} is outside [0, 1]")]
    EncodingRange { index: usize, value: f64 },

    #[error("output state vanished (trace {trace:e}): sample fully post-selected away")]
    VanishedState { trace: f64 },

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("relative entropy is infinite: support of rho not contained in support of sigma")]
    InfiniteDivergence,

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HtnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HtnError::InvalidArgument(msg.into())
    }

    /// Wraps an I/O error with the path it happened on.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        HtnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        HtnError::Shape(msg.into())
    }
}
