use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("I/O error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("plan/layout inconsistency: {0}")]
    Inconsistent(String),

    #[error("no feasible configuration: minimal achievable space is {min_space} bytes, budget is {budget} bytes")]
    Infeasible { min_space: u64, budget: u64 },

    #[error(
        "memory budget too small for batched packing: partition size C - 4N = {budget} - {page_size} x {buffers} leaves less than one {page_size}-byte page"
    )]
    PackingBudget {
        budget: u64,
        page_size: u32,
        buffers: usize,
    },

    #[error("pipeline failure: {0}")]
    Pipeline(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn inconsistent(msg: impl Into<String>) -> Self {
        Error::Inconsistent(msg.into())
    }

    pub(crate) fn at(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }
}
