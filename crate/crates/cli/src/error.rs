use std::path::PathBuf;

use carewatch_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

/// Process exit codes. Usage errors exit with 2 (clap's convention).
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const DATA: i32 = 5;
    pub const INSUFFICIENT_DATA: i32 = 6;
    pub const TRAINING_DIVERGED: i32 = 7;
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable name for the error class.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::CONFIG => "config",
            exit::IO => "io",
            exit::DATA => "data",
            exit::INSUFFICIENT_DATA => "insufficient-data",
            exit::TRAINING_DIVERGED => "training-diverged",
            _ => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use CoreError as E;
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. }
                | E::InvalidSpan(_)
                | E::IncompatibleKind { .. }
                | E::DeviceNotFound(_)
                | E::KTooLarge { .. } => exit::CONFIG,
                E::Io { .. } => exit::IO,
                E::UnknownDevice(_)
                | E::FormatViolation { .. }
                | E::DuplicateDevice(_)
                | E::EmptyCatalog
                | E::ModelFormat(_)
                | E::Csv(_)
                | E::Json(_) => exit::DATA,
                E::InsufficientData { .. }
                | E::EmptyWindow { .. }
                | E::EmptyEvaluation
                | E::InsufficientSpan { .. }
                | E::NoValidOrigin { .. } => exit::INSUFFICIENT_DATA,
                E::NonFiniteLoss { .. } => exit::TRAINING_DIVERGED,
                #[allow(unreachable_patterns)]
                _ => exit::INTERNAL,
            },
        }
    }

    /// The single-line JSON document printed to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config { field, .. } => body["field"] = json!(field),
            CliError::Io { path, .. } => body["path"] = json!(path),
            CliError::Core(CoreError::InvalidParameter { name, .. }) => body["field"] = json!(name),
            CliError::Core(CoreError::Io { path, .. }) => body["path"] = json!(path),
            CliError::Core(_) => {}
        }
        json!({ "error": body })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_and_json() {
        let e = CliError::config("windows.train", "bad span");
        assert_eq!(e.exit_code(), exit::CONFIG);
        assert_eq!(e.to_json()["error"]["field"], "windows.train");
        let e = CliError::io(
            "/nope.csv",
            std::io::Error::from(std::io::ErrorKind::NotFound),
        );
        assert_eq!(e.to_json()["error"]["path"], "/nope.csv");
        assert_eq!(e.kind(), "io");
        let e = CliError::Core(CoreError::NonFiniteLoss { epoch: 3 });
        assert_eq!(e.exit_code(), exit::TRAINING_DIVERGED);
        let e = CliError::Core(CoreError::InsufficientSpan {
            available_ms: 1,
            required_ms: 2,
        });
        assert_eq!(e.kind(), "insufficient-data");
    }
}
