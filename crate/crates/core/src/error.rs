use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ValueFormat;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("reading {index} violates the value format of device `{device_id}` (value {value})")]
    FormatViolation {
        index: usize,
        device_id: String,
        value: f64,
    },
    #[error("duplicate device `{0}` in catalog")]
    DuplicateDevice(String),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("device `{0}` not found in dataset")]
    DeviceNotFound(String),
    #[error("anomaly kind {kind} cannot target a {format:?} device")]
    IncompatibleKind { kind: String, format: ValueFormat },
    #[error("device `{device_id}` has {found} readings, need at least {needed}")]
    InsufficientData {
        device_id: String,
        found: usize,
        needed: usize,
    },
    #[error("window starting at {start} ms spanning {span_ms} ms holds fewer than 2 readings")]
    EmptyWindow { start: i64, span_ms: i64 },
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("k = {k} exceeds training set size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("no samples to evaluate")]
    EmptyEvaluation,
    #[error("dataset span {available_ms} ms is shorter than the required {required_ms} ms")]
    InsufficientSpan { available_ms: i64, required_ms: i64 },
    #[error("no valid window origin found after {attempts} draws")]
    NoValidOrigin { attempts: usize },
    #[error("invalid time span `{0}`")]
    InvalidSpan(String),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
