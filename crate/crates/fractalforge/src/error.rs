//! Crate-wide error type.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function argument was outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration file or merged run configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The chaos game escaped the divergence guard.
    #[error("chaos game diverged at iteration {step}")]
    Diverged { step: usize },

    /// A generator burned through its rejection budget without an acceptance.
    #[error("no valid system found after {attempts} attempts")]
    AttemptsExhausted { attempts: u64 },

    /// Feature columns do not line up with what a model was trained on.
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A persisted model could not be loaded or is internally inconsistent.
    #[error("model error: {0}")]
    Model(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed but its contents were not what we expected.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Attach a path to a parse/serialization problem.
    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code the CLI maps this error to.
    ///
    /// Exhausting the attempt budget is the one "operational" failure a caller
    /// may want to distinguish (retry with a different seed or looser filter);
    /// everything else is a plain error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AttemptsExhausted { .. } => 2,
            _ => 1,
        }
    }
}
