use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("schema version mismatch in {path}: expected {expected}, found {found}")]
    SchemaVersion { path: PathBuf, expected: u32, found: u32 },
    #[error(transparent)]
    Core(#[from] lesionprompt_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported datatype {dtype} in {path}")]
    UnsupportedDatatype { path: PathBuf, dtype: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedHeader { path: path.into(), reason: reason.into() }
    }

    /// Process exit code: 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
