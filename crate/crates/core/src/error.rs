use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants map onto the failure classes the
/// operations promise: configuration, I/O, record parsing vs. schema
/// violations, wire-protocol faults, shape/numeric errors and contract
/// violations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: parse error: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: schema error: {msg}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("file format error in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("backend '{backend}' unavailable after {attempts} attempts: {msg}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        msg: String,
    },

    #[error("backend '{backend}' protocol error: {msg}")]
    Protocol { backend: String, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("corpora misaligned: {0}")]
    Alignment(String),

    #[error("empty text after preprocessing{}", match id { Some(i) => format!(" (resume {i})"), None => String::new() })]
    EmptyText { id: Option<u64> },

    #[error("resume {id}: {source}")]
    Resume {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("incomplete results; missing cells: {}", missing.join(", "))]
    IncompleteResults { missing: Vec<String> },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_resume(id: u64) -> impl FnOnce(Error) -> Error {
        move |source| Error::Resume {
            id,
            source: Box::new(source),
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
