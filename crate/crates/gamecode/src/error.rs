use serde_json::json;
use std::path::PathBuf;
use thiserror::Error;

/// Process exit status for successful runs.
pub const EXIT_OK: i32 = 0;
/// A computation failed or a verification check did not pass.
pub const EXIT_FAILURE: i32 = 1;
/// The command line or an input file was malformed.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema or constraint violation in an input document. `pointer` is a
    /// JSON pointer into that document.
    #[error("{file}: {message} (at {pointer:?})")]
    Input {
        file: String,
        pointer: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Compute(#[from] gamecode_core::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn input(file: impl Into<String>, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Input {
            file: file.into(),
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Input { .. } => "input",
            CliError::Io { .. } => "io",
            CliError::Compute(_) => "computation",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    /// Single-line JSON document written to standard error.
    pub fn to_json(&self) -> String {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Input { file, pointer, message } = self {
            body["file"] = json!(file);
            body["pointer"] = json!(pointer);
            body["message"] = json!(message);
        }
        json!({ "error": body }).to_string()
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
