use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration values or mismatched artifact identities.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments that violate its preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite values, singular matrices and similar numerical failures.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("fit error for atom pair ({source_atom}, {target_atom}): {reason}")]
    Fit {
        source_atom: usize,
        target_atom: usize,
        reason: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 for usage/config problems, 2 for runtime and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Format(_) | Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
