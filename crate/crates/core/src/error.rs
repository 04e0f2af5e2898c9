use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("tensor of shape {shape:?} needs {expected} elements, got {got}")]
    DataLength { shape: Vec<usize>, expected: usize, got: usize },

    #[error("{what}: non-finite value")]
    NonFinite { what: &'static str },

    #[error("tape has not been finalized")]
    TapeNotFinalized,

    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid optimizer mapping: {0}")]
    InvalidMapping(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("mode {mode} is incompatible with the network: {reason}")]
    IncompatibleMode { mode: &'static str, reason: String },

    #[error("no stored state for replay index {0}")]
    MissingStoredState(usize),

    #[error("reconstruction drift {drift:e} exceeds threshold {threshold:e} at step {step}")]
    Divergence { step: usize, drift: f64, threshold: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
