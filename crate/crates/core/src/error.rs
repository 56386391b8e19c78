use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("cannot resample {fps} fps to {target} fps: rate must divide evenly")]
    UnsupportedRate { fps: u32, target: u32 },

    #[error("degenerate keyframe policy: {0}")]
    DegeneratePolicy(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index error in {op}: {message}")]
    Index { op: &'static str, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: u64,
        /// JSON description of the batch that produced the loss.
        dump: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
