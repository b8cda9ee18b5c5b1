use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A configuration or argument violates a documented constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// Unparseable or inconsistent input file.
    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint tensor `{name}` has shape {found:?}, config requires {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    /// NaN or infinity where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
