use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no uncensored observations: {0}")]
    NoEvents(String),

    #[error("rank-deficient design; offending columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("monotone likelihood (separation): coefficient `{column}` diverged to {value:.3}")]
    Separation { column: String, value: f64 },

    #[error("predictive mean matching needs {needed} complete cases, found {available}")]
    InsufficientDonors { needed: usize, available: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{failed} of {total} replicates failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while fitting a model (as opposed to bad input or I/O).
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            Error::NoEvents(_)
                | Error::RankDeficient { .. }
                | Error::Separation { .. }
                | Error::InsufficientDonors { .. }
                | Error::TooManyFailures { .. }
        )
    }
}
