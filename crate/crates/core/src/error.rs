use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("relative transfer function is singular at bin {bin}")]
    SingularRtf { bin: usize },

    #[error("matrix is numerically singular at {}bin {bin}", frame_label(.frame))]
    SingularMatrix { frame: Option<usize>, bin: usize },

    #[error("scene generation failed: {0}")]
    GenerationFailed(String),

    #[error("derivative operator failed: {0}")]
    Operator(String),
}

fn frame_label(frame: &Option<usize>) -> String {
    match frame {
        Some(t) => alloc::format!("frame {t}, "),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach a frame index to a singular-matrix error raised by a
    /// per-frequency routine.
    pub(crate) fn at_frame(self, t: usize) -> Self {
        match self {
            Error::SingularMatrix { bin, .. } => Error::SingularMatrix { frame: Some(t), bin },
            other => other,
        }
    }
}
