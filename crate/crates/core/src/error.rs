use thiserror::Error;

use crate::encoding::{RecordKey, SourceTag};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("key component {index} out of range: {reason}")]
    OutOfRange { index: usize, reason: String },
    #[error("empty composite key")]
    EmptyKey,
    #[error("remainder of {got} components does not match {tag:?} entry (expected {expected})")]
    RemainderMismatch {
        tag: SourceTag,
        expected: usize,
        got: usize,
    },
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("invalid byte 0x{byte:02x} at offset {offset}")]
    InvalidByte { byte: u8, offset: usize },
    #[error("{0} trailing bytes after decode")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("record not found: {0:?}")]
    NotFound(RecordKey),
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("index must be empty before a bulk load")]
    NotEmpty,
    #[error("malformed delta: {0}")]
    MalformedDelta(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
