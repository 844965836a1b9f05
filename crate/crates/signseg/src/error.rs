use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the CLI exit code classes:
/// `Config` -> 2, `Parse`/`Schema`/`Data` -> 3, `Prerequisite` -> 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// An io error with the file name attached; bare `?` loses it.
    pub fn io_at(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        let kind = err.kind();
        Error::Io(std::io::Error::new(
            kind,
            format!("{}: {}", path.into().display(), err),
        ))
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
