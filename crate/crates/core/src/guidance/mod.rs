//! Constraint guidance: differentiable value functions over relaxed boards,
//! Gumbel-softmax relaxation, and KL-regularized logit refinement applied
//! inside reverse sampling.

mod gumbel;
mod refine;
mod value;
mod value_net;

pub use gumbel::{build_gumbel_softmax, gumbel_noise, gumbel_softmax, gumbel_softmax_with_noise};
pub use refine::{guided_refine, kl_logits};
pub use value::{analytic_value, one_hot_board, AnalyticValue, ValueFunction};
pub use value_net::{
    corrupt_board, train_value_net, LearnedValue, ValueNetConfig, ValueTrainConfig, VALUE_KIND,
};

use crate::diffusion::DiffusionError;
use crate::grad::{CheckpointError, GradError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("invalid guidance config: {0}")]
    BadConfig(String),
    #[error("malformed relaxed board: {0}")]
    BadRelaxed(String),
    #[error("non-finite logits after refinement step {step}")]
    NonFinite { step: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl From<GuidanceError> for DiffusionError {
    fn from(e: GuidanceError) -> Self {
        DiffusionError::Guidance(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueSource {
    Analytic,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    /// Refinement iterations per guided timestep.
    pub steps: usize,
    /// Step size `η` applied to both gradient terms.
    pub eta: f64,
    /// KL weight `λ`.
    pub lambda: f64,
    /// Gumbel-softmax temperature `τ`.
    pub tau: f64,
    /// Straight-through one-hot forward pass.
    pub hard: bool,
    pub value: ValueSource,
    /// Draw fresh Gumbel noise every iteration; otherwise reuse one draw per call.
    pub resample_noise: bool,
    /// Guide every `every`-th reverse step, starting with the first.
    pub every: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            eta: 0.5,
            lambda: 0.1,
            tau: 0.5,
            hard: false,
            value: ValueSource::Learned,
            resample_noise: true,
            every: 1,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        let bad = |m: &str| Err(GuidanceError::BadConfig(m.to_string()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if self.every == 0 {
            return bad("every must be at least 1");
        }
        Ok(())
    }
}

/// A configured guidance hook for the reverse sampler.
#[derive(Clone, Copy)]
pub struct Guidance<'a, T> {
    pub config: &'a GuidanceConfig,
    pub value: &'a dyn ValueFunction<T>,
}
