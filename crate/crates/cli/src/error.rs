use std::fmt;

use defectforge_core::Error as CoreError;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// A failure with its exit code and a JSON payload for stderr.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl CliError {
    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_INVALID,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn io(message: impl Into<String>, err: impl fmt::Display) -> Self {
        Self {
            exit_code: EXIT_IO,
            code: "io",
            message: message.into(),
            detail: json!(err.to_string()),
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "code": self.code,
                "exit_code": self.exit_code,
                "message": self.message,
                "detail": self.detail,
            }
        })
        .to_string()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let (exit_code, code) = match &e {
            CoreError::Io { .. } => (EXIT_IO, "io"),
            CoreError::Transport(_) => (EXIT_IO, "transport"),
            CoreError::Parse { .. } => (EXIT_INVALID, "parse"),
            CoreError::Instruction(_) => (EXIT_INVALID, "instruction"),
            CoreError::Config(_) => (EXIT_INVALID, "config"),
            CoreError::UndefinedMetric(_) => (EXIT_INVALID, "undefined_metric"),
            CoreError::FingerprintMismatch { .. } => (EXIT_INVALID, "fingerprint_mismatch"),
            _ => (EXIT_INVALID, "synthesis"),
        };
        Self {
            exit_code,
            code,
            message: e.to_string(),
            detail: Value::Null,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl std::error::Error for CliError {}
