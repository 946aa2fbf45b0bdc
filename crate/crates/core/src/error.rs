use thiserror::Error;

pub type Result<T> = std::result::Result<T, GrkbsError>;

#[derive(Debug, Error)]
pub enum GrkbsError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter box: {0}")]
    InvalidBox(String),

    #[error("point {point:?} lies outside the parameter box")]
    OutsideBox { point: Vec<f64> },

    #[error("measure is defined on a different parameter box")]
    BoxMismatch,

    #[error("no atoms")]
    NoAtoms,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer chaining violated at layer {layer}: expected input dim {expected}, got {got}")]
    ChainMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("not in range (residual {residual:e})")]
    NotInRange { residual: f64 },

    #[error("index {index} out of range for {len} inputs")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite objective caused by atom at {theta:?}")]
    NonFinite { theta: Vec<f64> },

    #[error("{0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
