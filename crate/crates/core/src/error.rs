use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PsvmError>;

#[derive(Debug, Error)]
pub enum PsvmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("kernel is not positive semi-definite: eta({i}, {j}) = {value:e}")]
    NonPsdKernel { i: usize, j: usize, value: f64 },

    /// Root finding inside the pair update failed. Carries the pair and the
    /// quantities that decided the branch so the failure can be replayed.
    #[error("numeric failure on pair ({i}, {j}): {reason} [c = {c:e}, q = {q:e}]")]
    NumericFailure {
        i: usize,
        j: usize,
        c: f64,
        q: f64,
        reason: String,
    },

    #[error("training failed at sweep {sweep}: {source}")]
    Training {
        sweep: usize,
        #[source]
        source: Box<PsvmError>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<PsvmError>,
    },

    #[error(
        "reference solver did not converge after {steps} steps (last improvement {improvement:e})"
    )]
    OracleFailure { steps: usize, improvement: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("model format error at line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PsvmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PsvmError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PsvmError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        PsvmError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures that originate in floating-point root solving.
    pub fn is_numeric(&self) -> bool {
        match self {
            PsvmError::NumericFailure { .. } | PsvmError::OracleFailure { .. } => true,
            PsvmError::Training { source, .. } | PsvmError::Context { source, .. } => {
                source.is_numeric()
            }
            _ => false,
        }
    }
}
