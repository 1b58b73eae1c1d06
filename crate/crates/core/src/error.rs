use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Mismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op} expects a rank-2 tensor, got {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment fault at step {step}: {source}")]
    Env { step: usize, source: Box<Error> },

    #[error("non-finite parameter in layer {layer} of {network}")]
    BadParameter { network: String, layer: usize },

    #[error("non-finite loss at update {update}, epoch {epoch}: {dump}")]
    NonFiniteLoss { update: usize, epoch: usize, dump: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
