use std::io;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, got {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("frame {frame}: label {label} out of range [0, {regions})")]
    LabelOutOfRange {
        frame: usize,
        label: usize,
        regions: usize,
    },

    #[error("{file} at byte {offset}: {reason}")]
    Format {
        file: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("{file}, line {line}: {reason}")]
    Csv {
        file: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures of the filesystem rather than of the input contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
