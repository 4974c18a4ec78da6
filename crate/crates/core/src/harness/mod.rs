//! Evaluation, reporting and the command-line front end.

mod cli;
mod config;
mod eval;
mod report;

pub use cli::cli_main;
pub use config::Config;
pub use eval::{
    puzzle_hash, recheck, run_eval, ConstantSolver, MlmSolver, OracleSolver, PuzzleRecord,
    PuzzleSolver, SeddSolver, SolveReport,
};
pub use report::{
    emit_report, read_csv_records, read_csv_summary, render_table, report_to_csv, ReportFormat,
    Summary,
};

use crate::denoiser::DenoiserError;
use crate::diffusion::DiffusionError;
use crate::grad::CheckpointError;
use crate::guidance::GuidanceError;
use crate::sedd::SeddError;
use crate::sudoku::SudokuError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{origin}:{line}: {reason}")]
    Config {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("{0}")]
    BadArgument(String),
    #[error("eval set is empty")]
    EmptyEvalSet,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Sudoku(#[from] SudokuError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Sedd(#[from] SeddError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
