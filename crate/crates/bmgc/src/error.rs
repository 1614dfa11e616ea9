//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Degree-zero node hit while normalizing without self-loops. The caller
    /// must either switch to the self-loop variant or drop the node.
    #[error("node {0} is isolated; use self-loop normalization or drop it")]
    IsolatedNode(usize),

    #[error("self-loop on node {0} is not allowed for this normalization")]
    SelfLoop(usize),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error("label error: {0}")]
    LabelRange(String),

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("class {0} has no members")]
    EmptyClass(usize),

    #[error("at least two classes are required")]
    SingleClass,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite gradient at epoch {epoch} ({breakdown})")]
    NonFiniteGradient { epoch: usize, breakdown: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("ground truth contains a single class; NMI is undefined")]
    SingleClassTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Format(_)
            | Error::LabelRange(_)
            | Error::ShapeMismatch(_)
            | Error::LengthMismatch(..)
            | Error::EmptyGraph
            | Error::EmptyClass(_)
            | Error::SingleClass
            | Error::SingleClassTruth
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
