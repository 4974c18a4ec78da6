//! Continuous-time absorbing diffusion: rate schedules, exact forward
//! sampling, and reverse sampling driven by marginal ratios with either
//! single-jump Euler steps or tau-leaping.

mod ratios;
mod sampler;
mod schedule;

pub use ratios::{DenoiserRatios, ExactRatioOracle, RatioModel};
pub use sampler::{
    ctmc_forward_sample, ctmc_forward_sample_tokens, euler_reverse_step, sedd_output_law,
    sedd_sample, sedd_sample_tokens, single_jump_kernel, tau_leap_kernel, tau_leap_step, JumpMode,
    SeddConfig, SeddStats, StepKernel,
};
pub use schedule::RateSchedule;

use crate::diffusion::DiffusionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeddError {
    #[error("invalid sampler config: {0}")]
    BadConfig(String),
    #[error("negative ratio {value} at position {position}, class {class}")]
    NegativeRatio {
        position: usize,
        class: usize,
        value: f64,
    },
    #[error("non-finite ratio at position {position}")]
    NonFinite { position: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}
