//! Minimal reverse-mode differentiation over dense arrays, with Adam and
//! checkpoint persistence.

pub mod check;
mod checkpoint;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{
    config_field, load_checkpoint, parse_config_snapshot, save_checkpoint, Checkpoint,
    CheckpointError, MAGIC, VERSION,
};
pub use graph::{AttentionShape, CeTarget, Graph, Var};
pub use params::{AdamConfig, ParamStore};
pub use tensor::Tensor;
pub(crate) use tensor::{argmax, log_softmax_rows, softmax_rows};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("gradient requested through non-differentiable op {0}")]
    NotDifferentiable(&'static str),
    #[error("unknown parameter {0}")]
    MissingParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
}
