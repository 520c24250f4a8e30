use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: no such file", .0.display())]
    NotFound(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {0:02x?}, expected LAM1")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported dtype byte {0:#04x}")]
    UnsupportedDtype(u8),

    #[error("truncated payload: header promises {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("timeline line {line}: {msg}")]
    Timeline { line: usize, msg: String },

    #[error("table: {0}")]
    Table(String),

    #[error("{msg}")]
    Invalid { module: &'static str, msg: String },

    #[error("degenerate dataset: {msg}")]
    Degenerate { module: &'static str, msg: String },

    #[error("no convergence: {msg}")]
    NotConverged { module: &'static str, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("loss diverged at epoch {epoch}")]
    Diverged { module: &'static str, epoch: usize },
}

impl Error {
    pub(crate) fn invalid(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn degenerate(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Degenerate {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Module that raised the error, as used in the `E:<module>:<code>:` prefix.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Invalid { module, .. }
            | Error::Degenerate { module, .. }
            | Error::NotConverged { module, .. }
            | Error::Diverged { module, .. } => module,
            Error::Usage(_) => "cli",
            _ => "core-io",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not-found",
            Error::Io { .. } => "io",
            Error::BadMagic(_) => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::UnsupportedDtype(_) => "unsupported-dtype",
            Error::Truncated { .. } => "truncated",
            Error::NonFinite { .. } => "non-finite",
            Error::Manifest(_) => "manifest",
            Error::Timeline { .. } => "timeline",
            Error::Table(_) => "table",
            Error::Invalid { .. } => "invalid",
            Error::Degenerate { .. } => "degenerate",
            Error::NotConverged { .. } => "not-converged",
            Error::Diverged { .. } => "diverged",
            Error::Usage(_) => "usage",
        }
    }

    /// Ingestion and file-format failures are usage/I-O errors; everything
    /// else is a computation error.
    pub fn is_io(&self) -> bool {
        matches!(self.module(), "core-io" | "cli")
    }
}
