use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("jet nesting depth {depth} exceeds the supported maximum {max}")]
    NestingTooDeep { depth: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("implicit stages did not converge (final residual {residual:e})")]
    Convergence { residual: f64 },

    #[error("unknown {what} `{name}`")]
    UnknownName { what: &'static str, name: String },

    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("reference flow needed more than {max_substeps} substeps")]
    Stiffness { max_substeps: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
