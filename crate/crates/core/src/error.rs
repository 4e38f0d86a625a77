use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory. Each variant names the violated
/// contract so sweep validation can report every failure at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported domain: {0}")]
    Unsupported(String),
    #[error("rank deficient regression: {0}")]
    Rank(String),
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration rather than a
    /// runtime failure; the CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
