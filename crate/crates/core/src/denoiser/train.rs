use super::{DenoiserConfig, DenoiserError, TransformerDenoiser};
use crate::diffusion::{forward_sample, LogitGrid, Schedule, TokenSeq};
use crate::grad::{log_softmax_rows, save_checkpoint, AdamConfig, CeTarget, Graph};
use crate::scalar::Scalar;
use crate::sudoku::Board;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Mean over `masked` of `−log softmax(logits[i])[x0_i]`; zero when `masked` is empty.
pub fn mlm_loss<T: Scalar>(logits: &LogitGrid<T>, x0: &Board, masked: &[usize]) -> T {
    if masked.is_empty() {
        return T::zero();
    }
    let classes = logits.classes();
    let total: T = masked
        .iter()
        .map(|&i| {
            let mut row = logits.row(i).to_vec();
            log_softmax_rows(&mut row, classes);
            -row[x0.get(i) as usize - 1]
        })
        .sum();
    total / T::lit(masked.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// Linear warmup to `peak`, then cosine decay to `peak · floor`.
    WarmupCosine { peak: f64, warmup: usize, floor: f64 },
}

impl LrSchedule {
    pub fn at(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::WarmupCosine { peak, warmup, floor } => {
                if step < warmup {
                    return peak * (step + 1) as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1) as f64;
                let progress = ((step - warmup) as f64 / span).min(1.0);
                let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                peak * (floor + (1.0 - floor) * cos)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub steps: usize,
    pub lr: LrSchedule,
    /// Evaluate held-out masked accuracy every this many steps (0 disables).
    pub eval_every: usize,
    pub seed: u64,
    /// Written once training finishes.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 32,
            steps: 4000,
            lr: LrSchedule::WarmupCosine {
                peak: 1e-3,
                warmup: 200,
                floor: 0.1,
            },
            eval_every: 500,
            seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMetrics {
    pub step: usize,
    pub loss: f64,
    /// Held-out masked-token accuracy, when evaluated at this step.
    pub eval_acc: Option<f64>,
}

/// Trains a fresh denoiser with masked-token cross-entropy.
///
/// Each step draws a batch of solutions, a timestep `t ~ U{1..T}` per example
/// and a forward corruption, and takes one Adam step on the per-example mean
/// of the masked-token losses averaged over the batch. `observe` sees every
/// step's metrics as they are produced.
pub fn train_denoiser<T: Scalar>(
    solutions: &[Board],
    held_out: &[Board],
    dcfg: &DenoiserConfig,
    tcfg: &TrainConfig,
    schedule: &Schedule<T>,
    observe: &mut dyn FnMut(&TrainMetrics),
) -> Result<(TransformerDenoiser<T>, Vec<TrainMetrics>), DenoiserError> {
    let mut model = TransformerDenoiser::new(dcfg.clone())?;
    let metrics = continue_training(&mut model, solutions, held_out, tcfg, schedule, observe)?;
    if let Some(path) = &tcfg.checkpoint {
        save_checkpoint(&model.to_checkpoint(), path)?;
    }
    Ok((model, metrics))
}

/// Like [`train_denoiser`] but starts from existing weights and writes no checkpoint.
pub fn continue_training<T: Scalar>(
    model: &mut TransformerDenoiser<T>,
    solutions: &[Board],
    held_out: &[Board],
    tcfg: &TrainConfig,
    schedule: &Schedule<T>,
    observe: &mut dyn FnMut(&TrainMetrics),
) -> Result<Vec<TrainMetrics>, DenoiserError> {
    if solutions.is_empty() {
        return Err(DenoiserError::EmptyDataset);
    }
    if tcfg.batch == 0 || tcfg.steps == 0 {
        return Err(DenoiserError::BadConfig("batch and steps must be positive".into()));
    }
    let order = model.config().order;
    if let Some(b) = solutions.iter().chain(held_out).find(|b| b.order() != order) {
        return Err(DenoiserError::OrderMismatch {
            expected: order,
            found: b.order(),
        });
    }
    if let Some(b) = solutions.iter().chain(held_out).find(|b| !b.is_complete()) {
        return Err(DenoiserError::BadConfig(format!("training board {} is incomplete", b.to_line())));
    }
    let big_t = schedule.num_steps();
    if big_t > model.config().max_t {
        return Err(DenoiserError::BadConfig(format!(
            "schedule has {big_t} steps, model conditions on at most {}",
            model.config().max_t
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    drop_rng.set_stream(1);
    let len = model.config().seq_len();
    let mut out = Vec::with_capacity(tcfg.steps);
    for step in 0..tcfg.steps {
        let mut xs = Vec::with_capacity(tcfg.batch);
        let mut ts = Vec::with_capacity(tcfg.batch);
        let mut targets = Vec::new();
        for b in 0..tcfg.batch {
            let x0 = &solutions[rng.gen_range(0..solutions.len())];
            let t = rng.gen_range(1..=big_t);
            let xt = forward_sample(x0, t, schedule, &mut rng)?;
            let masked = xt.masked_set();
            let w = T::one() / T::lit((masked.len() * tcfg.batch) as f64);
            targets.extend(masked.iter().map(|&i| CeTarget {
                row: b * len + i,
                class: x0.get(i) as usize - 1,
                weight: w,
            }));
            xs.push(xt);
            ts.push(t);
        }
        let mut g = Graph::new();
        let logits = model.forward(&mut g, &xs, &ts, Some(&mut drop_rng))?;
        let loss = g.cross_entropy(logits, targets);
        g.backward(loss)?;
        let adam = AdamConfig {
            lr: tcfg.lr.at(step, tcfg.steps),
            ..AdamConfig::default()
        };
        let grads = g.param_grads();
        model.params_mut().adam_step(&grads, &adam)?;
        let last = step + 1 == tcfg.steps;
        let eval_acc = if !held_out.is_empty()
            && ((tcfg.eval_every > 0 && (step + 1) % tcfg.eval_every == 0) || last)
        {
            Some(masked_accuracy(model, held_out, schedule, tcfg.seed)?)
        } else {
            None
        };
        let m = TrainMetrics {
            step: step + 1,
            loss: g.value(loss).item().as_f64(),
            eval_acc,
        };
        observe(&m);
        out.push(m);
    }
    Ok(out)
}

/// Fraction of masked tokens whose argmax prediction is correct, over one
/// seeded corruption of every board at `t ~ U{1..T}`.
pub fn masked_accuracy<T: Scalar>(
    model: &TransformerDenoiser<T>,
    boards: &[Board],
    schedule: &Schedule<T>,
    seed: u64,
) -> Result<f64, DenoiserError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let len = model.config().seq_len();
    let (mut correct, mut total) = (0usize, 0usize);
    for chunk in boards.chunks(64) {
        let mut xs: Vec<TokenSeq> = Vec::with_capacity(chunk.len());
        let mut ts = Vec::with_capacity(chunk.len());
        for x0 in chunk {
            let t = rng.gen_range(1..=schedule.num_steps());
            xs.push(forward_sample(x0, t, schedule, &mut rng)?);
            ts.push(t);
        }
        let mut g = Graph::new();
        let out = model.forward(&mut g, &xs, &ts, None)?;
        let logits = g.value(out);
        for (b, (x0, xt)) in chunk.iter().zip(&xs).enumerate() {
            for i in xt.masked_set() {
                let row = logits.row(b * len + i);
                total += 1;
                correct += (crate::grad::argmax(row) + 1 == x0.get(i) as usize) as usize;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { correct as f64 / total as f64 })
}
