//! Guided discrete diffusion for Sudoku.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that do not care.

pub mod denoiser;
pub mod diffusion;
pub mod grad;
pub mod guidance;
pub mod harness;
pub mod scalar;
pub mod sedd;
pub mod sudoku;

pub use diffusion::{generate, Denoiser, TokenSeq, MASK};
pub use harness::{run_eval, SolveReport};
pub use sudoku::{count_violations, Board, GroupTable};

pub type Tensor32 = grad::Tensor<f32>;
pub type Tensor64 = grad::Tensor<f64>;
pub type Graph32 = grad::Graph<f32>;
pub type Graph64 = grad::Graph<f64>;
pub type Schedule32 = diffusion::Schedule<f32>;
pub type Schedule64 = diffusion::Schedule<f64>;
pub type LogitGrid32 = diffusion::LogitGrid<f32>;
pub type LogitGrid64 = diffusion::LogitGrid<f64>;
pub type Denoiser32 = denoiser::TransformerDenoiser<f32>;
pub type Denoiser64 = denoiser::TransformerDenoiser<f64>;
pub type LearnedValue32 = guidance::LearnedValue<f32>;
pub type LearnedValue64 = guidance::LearnedValue<f64>;
