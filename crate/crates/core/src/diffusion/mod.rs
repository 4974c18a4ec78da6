//! Discrete-time absorbing-state diffusion: masking schedules, forward
//! corruption, denoiser-parameterized reverse transitions and the (optionally
//! guided) infilling sampler.

mod sampler;
mod schedule;
mod tokens;
pub mod toy;

pub use sampler::{
    clamp_infill, clamp_tokens, forward_sample, forward_sample_tokens, generate, reverse_step,
    reverse_step_probs, MlmSampler,
};
pub(crate) use sampler::sample_categorical;
pub use schedule::{make_schedule, Schedule, ScheduleKind};
pub use tokens::{DenoiserDist, LogitGrid, TokenSeq, MASK};

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("board must be complete")]
    IncompleteBoard,
    #[error("stride k = {k} invalid at t = {t}")]
    BadStride { k: usize, t: usize },
    #[error("time {t} outside 0..={max}")]
    TimeOutOfRange { t: usize, max: usize },
    #[error("token {token} outside {num_classes} classes")]
    BadToken { token: u8, num_classes: usize },
    #[error("sequence length mismatch: expected {expected}, found {found}")]
    OrderMismatch { expected: usize, found: usize },
    #[error("row {0} is not a probability distribution")]
    NotADistribution(usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("board: {0}")]
    Board(String),
    #[error("denoiser: {0}")]
    Denoiser(String),
    #[error("guidance: {0}")]
    Guidance(String),
}

/// Anything producing `p̃(x̃₀ | x_t)` logits for a corrupted sequence.
pub trait Denoiser<T: Scalar>: Sync {
    fn seq_len(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// `seq_len × num_classes` logits over clean digit classes.
    fn denoise(&self, x: &TokenSeq, t: usize) -> Result<LogitGrid<T>, DiffusionError>;
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for &D {
    fn seq_len(&self) -> usize {
        (**self).seq_len()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn denoise(&self, x: &TokenSeq, t: usize) -> Result<LogitGrid<T>, DiffusionError> {
        (**self).denoise(x, t)
    }
}
