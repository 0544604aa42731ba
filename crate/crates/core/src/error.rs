use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of bounds (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("task pool construction failed after {attempts} attempts; accepted optimal values {achieved:?}, required separation {c_sep}")]
    Construction {
        attempts: usize,
        achieved: Vec<f64>,
        c_sep: f64,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration budget exhausted: best K {best_k} reached rate {best_rate:.3}")]
    Calibration { best_k: usize, best_rate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Index { .. } => "index",
            Error::Config(_) => "config",
            Error::InvalidTask(_) => "invalid_task",
            Error::Construction { .. } => "construction",
            Error::EmptyDataset => "empty_dataset",
            Error::Numeric(_) => "numeric",
            Error::Protocol(_) => "protocol",
            Error::Domain(_) => "domain",
            Error::Calibration { .. } => "calibration",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { what, index, len })
    }
}
