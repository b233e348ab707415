use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("record validation failed: {0}")]
    Validation(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("corrupt file at byte offset {offset}: {msg}")]
    Corruption { offset: u64, msg: String },
    #[error("training failed: non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("gradient check failed: block `{block}` relative error {worst:e} exceeds {tolerance:e}")]
    GradientCheck { block: String, worst: f64, tolerance: f64 },
    #[error("input mismatch: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::State(_) => "state",
            Error::Contract(_) => "contract",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Corruption { .. } => "corruption",
            Error::NonFiniteGradient { .. } => "training",
            Error::NonFinite(_) => "non_finite",
            Error::GradientCheck { .. } => "gradcheck",
            Error::Input(_) => "input",
            Error::Io(_) => "io",
        }
    }
}
