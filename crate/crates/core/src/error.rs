use std::path::PathBuf;

/// Broad failure classes. The CLI maps each to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    MissingPrerequisite,
    Config,
    NonFinite,
    Invalid,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Io | ErrorCategory::Invalid => 1,
            ErrorCategory::MissingPrerequisite => 2,
            ErrorCategory::Config => 3,
            ErrorCategory::NonFinite => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Io => "io",
            ErrorCategory::MissingPrerequisite => "missing-prerequisite",
            ErrorCategory::Config => "config",
            ErrorCategory::NonFinite => "non-finite",
            ErrorCategory::Invalid => "invalid-input",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("autoencoder parameter `{0}` is trainable; the alignment loss requires a frozen autoencoder")]
    UnfrozenAutoencoder(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::MissingPrerequisite(_) => ErrorCategory::MissingPrerequisite,
            Error::Config(_) => ErrorCategory::Config,
            Error::NonFinite { .. } => ErrorCategory::NonFinite,
            Error::Format { .. }
            | Error::Invalid(_)
            | Error::Shape(_)
            | Error::UnfrozenAutoencoder(_)
            | Error::Tensor(_) => ErrorCategory::Invalid,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
