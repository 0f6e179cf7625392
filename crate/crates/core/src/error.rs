use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("entry ({row}, {col}) is out of bounds for a {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("duplicate entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("unknown {axis} id {id:?} (cold-start entries are not supported)")]
    ColdId { axis: &'static str, id: String },

    /// The operator handed to the power method is numerically zero.
    #[error("operator is numerically zero")]
    ZeroOperator,

    #[error("non-finite objective at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFinite { .. } | Error::ZeroOperator => 4,
            Error::DimensionMismatch(_) => 2,
            Error::IndexOutOfBounds { .. }
            | Error::DuplicateEntry { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::ColdId { .. }
            | Error::ModelFormat(_)
            | Error::Io(_) => 3,
        }
    }
}
