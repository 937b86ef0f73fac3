use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the fit/synthesis/diagnostics pipeline.
///
/// Every variant maps onto one of the stable process exit codes through
/// [`Error::exit_code`]: 2 for I/O, 3 for validation, 4 for numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access '{}': {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or inconsistent file contents.
    #[error("{}", format_message(.field, .offset, .reason))]
    Format {
        field: String,
        offset: Option<u64>,
        reason: String,
    },

    #[error("{module}: {reason}")]
    Invalid { module: &'static str, reason: String },

    #[error("{module}: dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        module: &'static str,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{module}: insufficient samples: need more than {needed}, found {found}")]
    InsufficientSamples {
        module: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("{module}: {reason}")]
    Numerical { module: &'static str, reason: String },
}

fn format_message(field: &str, offset: &Option<u64>, reason: &str) -> String {
    match offset {
        Some(off) => format!("field '{field}' at byte {off}: {reason}"),
        None => format!("field '{field}': {reason}"),
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Format { .. }
            | Error::Invalid { .. }
            | Error::DimensionMismatch { .. }
            | Error::InsufficientSamples { .. } => 3,
            Error::Numerical { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, offset: Option<u64>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn mismatch(module: &'static str, what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            module,
            what,
            expected,
            found,
        }
    }
}
