use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value at tape node {node} ({context})")]
    Numeric { node: usize, context: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step} (view {view}, pixel {pixel:?}): {detail}")]
    Diverged {
        step: u64,
        view: usize,
        pixel: (usize, usize),
        detail: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// True for failures caused by non-finite numbers rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::Diverged { .. })
    }
}
