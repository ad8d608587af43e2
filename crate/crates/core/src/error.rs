use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: String,
        found: String,
    },

    #[error("cholesky factorization failed for {context} (smallest eigenvalue estimate {min_eigenvalue:.3e})")]
    Cholesky { context: String, min_eigenvalue: f64 },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical underflow: {0}")]
    Underflow(String),

    #[error("sweep {sweep}, block {block}: {source}")]
    Sampler {
        sweep: usize,
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("forecast simulation rejected {rejected} of {attempted} paths (state clamp breaches)")]
    TooManyRejections { rejected: usize, attempted: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error:\n{}", .0.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    #[error("{0}")]
    Backtest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_block(self, sweep: usize, block: &'static str) -> Self {
        Error::Sampler {
            sweep,
            block,
            source: Box::new(self),
        }
    }
}
