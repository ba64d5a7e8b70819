use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes violate an operation's contract.
    #[error("{op}: shape mismatch, left is {left:?}, right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient rows: need {required}, have {available}")]
    InsufficientRows { required: usize, available: usize },

    #[error("training diverged at gamma = {gamma}")]
    Diverged { gamma: f64 },

    #[error("every learning rate diverged: {0:?}")]
    AllDiverged(Vec<f64>),

    #[error("{what}: bad file format ({msg})")]
    Format { what: &'static str, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
