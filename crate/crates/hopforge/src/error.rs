use std::path::Path;

use hopforge_core::Error as CoreError;
use serde::Serialize;

/// Broad failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Transport,
    Integrity,
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Transport => 3,
            ErrorKind::Integrity => 4,
            ErrorKind::Runtime => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct AppError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Integrity, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::integrity(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// The machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind, "exit_code": self.exit_code(), "message": self.message }
        })
        .to_string()
    }
}

impl From<CoreError> for AppError {
    fn from(err: CoreError) -> Self {
        let kind = match &err {
            CoreError::Validation { .. } => ErrorKind::Config,
            CoreError::Transport { .. } | CoreError::Protocol(_) => ErrorKind::Transport,
            CoreError::Integrity(_) | CoreError::NotRepresentable(_) => ErrorKind::Integrity,
            CoreError::Domain(_) | CoreError::Numeric(_) | CoreError::Divergence(_) => ErrorKind::Runtime,
        };
        Self::new(kind, err.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(AppError::from(CoreError::validation("k", "bad")).exit_code(), 2);
        assert_eq!(AppError::from(CoreError::transport(Some(500), "boom")).exit_code(), 3);
        assert_eq!(AppError::from(CoreError::Integrity("x".into())).exit_code(), 4);
        let v: serde_json::Value = serde_json::from_str(&AppError::config("nope").to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["exit_code"], 2);
    }
}
