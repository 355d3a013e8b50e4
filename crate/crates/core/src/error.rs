//! Crate-wide error type and the exit-code contract used by the CLI.

use std::path::Path;

/// Error for all fallible toolkit operations.
///
/// Variants are grouped by how the CLI reports them: validation and
/// configuration problems exit with code 2, I/O problems with 3 and
/// numerical aborts (NaN during training) with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file did not conform to its expected format.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        /// 1-based line number within the file.
        line: usize,
        msg: String,
    },

    /// Input data violated an invariant (joint count, timestamps, shapes...).
    #[error("{0}")]
    Validation(String),

    /// A configuration value is out of range or inconsistent.
    #[error("configuration: {0}")]
    Config(String),

    /// Underlying file-system failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A numerical computation produced NaN/Inf and was aborted.
    #[error("numerical abort: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// Stable exit-code mapping: 2 validation, 3 I/O, 4 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Signal raised by geometric operations when the input vectors are too
/// short (or too aligned) to define an angle. Callers in the retargeting
/// path map this to "hold the previous joint value".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegenerateGeometry;

impl std::fmt::Display for DegenerateGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "degenerate geometry")
    }
}

impl std::error::Error for DegenerateGeometry {}
