use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },
    #[error("architecture fingerprint mismatch: file {found:016x}, expected {expected:016x}")]
    Fingerprint { expected: u64, found: u64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("truncated: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Corrupt { stored: u64, computed: u64 },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("operation order violated: {0}")]
    Order(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing dataset for variant(s) {0:?}")]
    MissingVariant(Vec<u8>),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
