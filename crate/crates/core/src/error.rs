use std::path::PathBuf;

use crate::grid::GridIndex;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index ({row}, {col}) is outside {what}", row = .index.row, col = .index.col)]
    IndexOutOfRange { index: GridIndex, what: &'static str },

    #[error("degenerate spectrum (max equals min){}", .0.map(|i| format!(" at ({}, {})", i.row, i.col)).unwrap_or_default())]
    DegenerateSpectrum(Option<GridIndex>),

    #[error("no target exists yet")]
    MissingTarget,

    #[error("invalid state: {0}")]
    State(String),

    #[error("cholesky factorization failed at leading minor {minor} (jitter {jitter:e})")]
    Factorization { minor: usize, jitter: f64 },

    #[error("non-finite training loss at optimizer step {step}")]
    NonFiniteLoss { step: usize },

    #[error("surrogate failure at iteration {iteration}: {source}")]
    Surrogate {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all candidates explored")]
    CandidatesExhausted,

    #[error("voter aborted: {0}")]
    VoterAbort(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
