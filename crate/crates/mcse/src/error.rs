use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags or configuration; maps to exit code 1.
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", .path.display())]
    Wav { path: PathBuf, source: hound::Error },

    #[error("{}: {source}", .path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{}: {msg}", .path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{context}: {source}")]
    Core { context: String, source: mcse_core::Error },

    #[error("no system output for {} utterance(s): {}", .0.len(), .0.join(", "))]
    MissingOutputs(Vec<String>),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }
}

/// Attach context to core errors.
pub trait CoreContext<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> CoreContext<T> for mcse_core::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Core { context: context(), source })
    }
}
