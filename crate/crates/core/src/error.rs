use thiserror::Error;

/// Failures raised anywhere in the solver pipeline.
///
/// The variants are grouped by how a caller is expected to react: parameter
/// problems are fixed by changing input, resonance and quadrature failures
/// mean the chosen quasimomentum is unusable, and non-convergence carries
/// whatever partial evidence was collected.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("resonance: {0}")]
    Resonance(String),

    #[error(
        "contour quadrature did not converge at order {order}: {nodes} vs {doubled} nodes differ by {discrepancy:.3e}"
    )]
    Quadrature {
        order: usize,
        nodes: usize,
        doubled: usize,
        discrepancy: f64,
    },

    #[error("fixed-point iteration did not converge after {} iterations", trace.records.len())]
    NotConverged {
        trace: Box<crate::fixed_point::FixedPointTrace>,
    },

    #[error("Newton solve failed: {0}")]
    Newton(String),

    #[error("root not found: {0}")]
    RootNotFound(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit status used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::Config { .. }
            | Error::Contract(_) => 2,
            Error::NotConverged { .. } => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
