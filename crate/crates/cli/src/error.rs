use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cizsl_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use cizsl_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Io { .. } | CliError::Csv(_) => EXIT_IO,
            CliError::Core(e) => match e {
                E::Validation(_) | E::Dimension { .. } => EXIT_VALIDATION,
                E::NumericOverflow { .. } => EXIT_NUMERIC,
                // Unreadable and malformed files alike.
                E::Io { .. } | E::Format { .. } => EXIT_IO,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
