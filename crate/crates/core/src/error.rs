use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{path}: duplicate id `{id}` on lines {first} and {second}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first: usize,
        second: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("token budget {budget} too small: the scaffold alone needs {scaffold} tokens")]
    BudgetTooSmall { budget: usize, scaffold: usize },

    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),

    #[error("cache conflict for key {key}: stored text differs from new text")]
    CacheConflict { key: String },

    #[error("unknown report format `{0}` (expected table, csv or json)")]
    UnknownFormat(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }
}
