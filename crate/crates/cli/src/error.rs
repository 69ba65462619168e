use std::fmt;

use serde_json::json;

/// A failure reported as `{"error": {"kind", "message"}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }

    pub fn exit_code(&self) -> i32 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

/// Tags foreign errors with a kind.
pub trait Kind<T> {
    fn kind(self, kind: &'static str) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> Kind<T> for Result<T, E> {
    fn kind(self, kind: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(kind, e.to_string()))
    }
}
