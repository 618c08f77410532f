use std::path::PathBuf;

/// Errors raised by the harness. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("identity check failed: {0}")]
    Identity(String),

    #[error("runtime failure: {0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] xpo_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    pub fn validation(msg: impl Into<String>) -> Self {
        LabError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for invalid input, 2 for a failed identity check, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        use xpo_core::Error as E;
        match self {
            LabError::Validation(_) => 1,
            LabError::Identity(_) => 2,
            LabError::Runtime(_) | LabError::Io { .. } => 3,
            LabError::Core(e) => match e {
                E::AtIteration { .. } | E::Minimizer(_) => 3,
                _ => 1,
            },
        }
    }
}
