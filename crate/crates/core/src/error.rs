use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class; drives the CLI exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Validation,
    Numeric,
    Remote,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Io => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Remote => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("non-finite value in record {record} component {component}")]
    NonFinite { record: usize, component: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid dimension {0} (must be in 1..=65536)")]
    InvalidDimension(usize),
    #[error("ids must be unique and strictly increasing (id {id} follows {prev})")]
    IdOrder { prev: u64, id: u64 },
    #[error("csv row {row}: expected {expected} fields, found {found}")]
    CsvArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv row {row}: cannot parse {field:?} as a number")]
    CsvNumber { row: usize, field: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("{0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("remote: {0}")]
    Remote(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Numeric(_) | Error::NonFinite { .. } => ErrorClass::Numeric,
            Error::Remote(_) => ErrorClass::Remote,
            Error::Usage(_) => ErrorClass::Usage,
            _ => ErrorClass::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
