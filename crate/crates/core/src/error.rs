use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a domain invariant. `field` names the offending field.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("not found: {0}")]
    NotFound(String),

    /// The underlying database failed; callers may retry.
    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),

    #[error("registry {path}: {message}")]
    Registry { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("import already running")]
    ImportInFlight,

    #[error("gateway error: {0}")]
    Gateway(String),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Storage(_))
    }
}
