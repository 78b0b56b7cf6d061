use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type. Variants are grouped by how callers should react:
/// bad input data, bad caller-supplied parameters, or a broken internal
/// invariant that indicates a bug rather than bad input.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed row or field in an input file.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    /// A record referenced an object id that was never ingested.
    #[error("unknown object id `{id}`")]
    UnknownObject { id: String },

    /// A query referenced a user id absent from the index.
    #[error("unknown user id `{id}`")]
    UnknownUser { id: String },

    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot build index over empty corpus")]
    EmptyCorpus,

    /// A persisted artifact failed structural or integrity checks.
    #[error("{path}: {message}")]
    Corrupt { path: String, message: String },

    /// An internal invariant did not hold; this is a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(file: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn corrupt(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}
