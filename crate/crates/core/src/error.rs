use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("at time step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate batch: no observed target in any instance")]
    DegenerateBatch,

    #[error("under-determined fit for pixel {pixel}: {rows} usable rows for {params} parameters")]
    UnderDetermined {
        pixel: String,
        rows: usize,
        params: usize,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (pixels {pixels:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        pixels: Vec<String>,
    },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("unsupported model container: {0}")]
    Container(String),

    #[error("metrics undefined: {0}")]
    MetricsUndefined(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
