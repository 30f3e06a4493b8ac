use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Each variant belongs to one of three [`ErrorKind`]s which the CLI maps onto
/// its exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("record {record}: {message}")]
    Malformed { record: usize, message: String },

    #[error("record {record}: {field} has length {found}, expected {expected}")]
    DimensionMismatch {
        record: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("record {record}: {field} contains a non-finite value")]
    NonFiniteValue { record: usize, field: &'static str },

    #[error("record {record}: duplicate id {id:?}")]
    DuplicateId { record: usize, id: String },

    #[error("record {record}: label {label} is not 0 or 1")]
    InvalidLabel { record: usize, label: i64 },

    #[error("knowledge entry {id:?} has an all-zero key")]
    ZeroKey { id: String },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fft length {0} is not a power of two >= 2")]
    InvalidFftLength(usize),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("cannot encode a zero vector as a quantum state")]
    ZeroVector,

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("class {class} has {count} members, need at least {required}")]
    InsufficientClass {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("roc-auc is undefined when only one class is present")]
    SingleClass,

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: &'static str },

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification of an [`Error`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) => ErrorKind::Usage,
            Error::Divergence { .. }
            | Error::NonFiniteGradient { .. }
            | Error::NonFiniteActivation(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
