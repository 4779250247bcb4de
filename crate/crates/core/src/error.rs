use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("transport error{}: {message}", status.map(|s| alloc::format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("query `{0}` is not in the unprompted candidate set")]
    NotRepresentable(String),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation { field, reason: reason.into() }
    }

    pub fn transport(status: Option<u16>, message: impl Into<String>) -> Self {
        Error::Transport { status, message: message.into() }
    }

    /// Failures of a remote backend. The sampler skips these instead of
    /// aborting a run.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport { .. } | Error::Protocol(_))
    }
}
