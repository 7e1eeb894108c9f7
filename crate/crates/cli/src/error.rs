use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config not found: {}", .0.display())]
    ConfigNotFound(PathBuf),

    /// Unparseable config or data file.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] dll_core::Error),
}

impl HarnessError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigNotFound(_) | HarnessError::Input { .. } | HarnessError::Io { .. } => 2,
            HarnessError::Core(e) => match e {
                dll_core::Error::InvalidParameter { .. } | dll_core::Error::InvalidData(_) => 2,
                dll_core::Error::IntegrationFailure { .. }
                | dll_core::Error::NonConvergence(_)
                | dll_core::Error::TooFewSamples { .. } => 3,
            },
        }
    }
}
