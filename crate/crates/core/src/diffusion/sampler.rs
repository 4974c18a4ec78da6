use super::schedule::Schedule;
use super::tokens::{DenoiserDist, LogitGrid, TokenSeq, MASK};
use super::{Denoiser, DiffusionError};
use crate::guidance::{guided_refine, Guidance};
use crate::scalar::Scalar;
use crate::sudoku::{Board, EMPTY};
use rand::Rng;

/// Draws an index from non-negative weights summing to (about) one.
pub(crate) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Corrupts a complete board: each cell independently becomes `MASK` with
/// probability `m̄_t`.
pub fn forward_sample<T: Scalar, R: Rng + ?Sized>(
    x0: &Board,
    t: usize,
    schedule: &Schedule<T>,
    rng: &mut R,
) -> Result<TokenSeq, DiffusionError> {
    if !x0.is_complete() {
        return Err(DiffusionError::IncompleteBoard);
    }
    forward_sample_tokens(&TokenSeq::from_board(x0), t, schedule, rng)
}

pub fn forward_sample_tokens<T: Scalar, R: Rng + ?Sized>(
    x0: &TokenSeq,
    t: usize,
    schedule: &Schedule<T>,
    rng: &mut R,
) -> Result<TokenSeq, DiffusionError> {
    if t > schedule.num_steps() {
        return Err(DiffusionError::TimeOutOfRange {
            t,
            max: schedule.num_steps(),
        });
    }
    if !x0.is_complete() {
        return Err(DiffusionError::IncompleteBoard);
    }
    let m = schedule.cum_mask(t).as_f64();
    let mut out = x0.clone();
    for i in 0..out.len() {
        if rng.gen::<f64>() < m {
            out.set(i, MASK);
        }
    }
    Ok(out)
}

/// Distribution of one token after a `k`-step reverse transition from `t`.
///
/// Returns `K + 1` probabilities: the `K` classes, then `MASK`. A masked token
/// stays masked with probability `m̄_{t−k} / m̄_t`, otherwise takes a class from
/// `dist_row`; an unmasked token is kept.
pub fn reverse_step_probs<T: Scalar>(
    token: u8,
    dist_row: &[T],
    t: usize,
    k: usize,
    schedule: &Schedule<T>,
) -> Result<Vec<T>, DiffusionError> {
    check_stride(t, k, schedule)?;
    let classes = dist_row.len();
    let mut out = vec![T::zero(); classes + 1];
    if token != MASK {
        out[token as usize] = T::one();
        return Ok(out);
    }
    let (now, then) = (schedule.cum_mask(t), schedule.cum_mask(t - k));
    let stay = if now > T::zero() { then / now } else { T::zero() };
    for (o, &p) in out.iter_mut().zip(dist_row) {
        *o = (T::one() - stay) * p;
    }
    out[classes] = stay;
    Ok(out)
}

fn check_stride<T: Scalar>(t: usize, k: usize, schedule: &Schedule<T>) -> Result<(), DiffusionError> {
    if k == 0 || k > t {
        return Err(DiffusionError::BadStride { k, t });
    }
    if t > schedule.num_steps() {
        return Err(DiffusionError::TimeOutOfRange {
            t,
            max: schedule.num_steps(),
        });
    }
    Ok(())
}

/// One denoiser-parameterized reverse transition `x_t → x_{t−k}`.
pub fn reverse_step<T: Scalar, R: Rng + ?Sized>(
    xt: &TokenSeq,
    dist: &DenoiserDist<T>,
    t: usize,
    k: usize,
    schedule: &Schedule<T>,
    rng: &mut R,
) -> Result<TokenSeq, DiffusionError> {
    check_stride(t, k, schedule)?;
    if dist.rows() != xt.len() || dist.classes() != xt.num_classes() {
        return Err(DiffusionError::Shape(format!(
            "distribution {}x{} for sequence of {} tokens over {} classes",
            dist.rows(),
            dist.classes(),
            xt.len(),
            xt.num_classes()
        )));
    }
    let mut out = xt.clone();
    for i in 0..xt.len() {
        if !xt.is_masked(i) {
            continue;
        }
        let probs = reverse_step_probs(MASK, dist.row(i), t, k, schedule)?;
        let pick = sample_categorical(&probs, rng);
        out.set(i, if pick == xt.num_classes() { MASK } else { pick as u8 });
    }
    Ok(out)
}

/// Overwrites positions given in `puzzle`; every other position is untouched.
pub fn clamp_infill(wt: &TokenSeq, puzzle: &Board) -> TokenSeq {
    let mut out = wt.clone();
    for (i, &d) in puzzle.cells().iter().enumerate() {
        if d != EMPTY {
            out.set(i, d - 1);
        }
    }
    out
}

/// Token-level infill: every non-`MASK` entry of `givens` is copied over.
pub fn clamp_tokens(wt: &TokenSeq, givens: &TokenSeq) -> TokenSeq {
    let mut out = wt.clone();
    for (i, &g) in givens.tokens().iter().enumerate() {
        if g != MASK {
            out.set(i, g);
        }
    }
    out
}

/// Reverse-process sampler driven by a denoiser.
pub struct MlmSampler<'a, T> {
    pub schedule: &'a Schedule<T>,
    /// Steps skipped per reverse transition.
    pub stride: usize,
    pub guidance: Option<Guidance<'a, T>>,
}

impl<'a, T: Scalar> MlmSampler<'a, T> {
    pub fn new(schedule: &'a Schedule<T>) -> Self {
        Self {
            schedule,
            stride: 1,
            guidance: None,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_guidance(mut self, guidance: Guidance<'a, T>) -> Self {
        self.guidance = Some(guidance);
        self
    }

    pub fn sample<D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
        &self,
        denoiser: &D,
        givens: Option<&TokenSeq>,
        rng: &mut R,
    ) -> Result<TokenSeq, DiffusionError> {
        self.sample_traced(denoiser, givens, rng, &mut |_, _| {})
    }

    /// Like [`sample`](Self::sample), reporting `(t, state)` after every
    /// clamp and once more for the final output at `t = 0`.
    pub fn sample_traced<D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
        &self,
        denoiser: &D,
        givens: Option<&TokenSeq>,
        rng: &mut R,
        observe: &mut dyn FnMut(usize, &TokenSeq),
    ) -> Result<TokenSeq, DiffusionError> {
        if self.stride == 0 {
            return Err(DiffusionError::BadStride { k: 0, t: self.schedule.num_steps() });
        }
        let (len, classes) = (denoiser.seq_len(), denoiser.num_classes());
        if let Some(g) = givens {
            if g.len() != len || g.num_classes() != classes {
                return Err(DiffusionError::OrderMismatch {
                    expected: len,
                    found: g.len(),
                });
            }
        }
        let clamp = |x: &TokenSeq| match givens {
            Some(g) => clamp_tokens(x, g),
            None => x.clone(),
        };
        let mut x = TokenSeq::all_masked(classes, len);
        let mut t = self.schedule.num_steps();
        let mut last: Option<LogitGrid<T>> = None;
        let mut step_index = 0usize;
        while t > 0 {
            x = clamp(&x);
            observe(t, &x);
            let mut logits = denoiser.denoise(&x, t)?;
            if let Some(guide) = &self.guidance {
                if step_index % guide.config.every.max(1) == 0 {
                    logits = guided_refine(&logits, guide.value, guide.config, Some(&x), rng)?;
                }
            }
            let k = self.stride.min(t);
            x = reverse_step(&x, &logits.probs(), t, k, self.schedule, rng)?;
            t -= k;
            step_index += 1;
            last = Some(logits);
        }
        x = clamp(&x);
        let last = last.expect("at least one reverse step");
        for i in x.masked_set() {
            x.set(i, last.argmax_row(i) as u8);
        }
        observe(0, &x);
        Ok(x)
    }
}

/// Samples a complete board, optionally infilling a puzzle and guiding the logits.
pub fn generate<T: Scalar, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    schedule: &Schedule<T>,
    puzzle: Option<&Board>,
    guidance: Option<Guidance<'_, T>>,
    stride: usize,
    rng: &mut R,
) -> Result<Board, DiffusionError> {
    let classes = denoiser.num_classes();
    let order = (classes as f64).sqrt().round() as usize;
    if order * order != classes || classes * classes != denoiser.seq_len() {
        return Err(DiffusionError::Shape(format!(
            "denoiser over {} positions and {classes} classes is not a Sudoku model",
            denoiser.seq_len()
        )));
    }
    if let Some(p) = puzzle {
        if p.order() != order {
            return Err(DiffusionError::OrderMismatch {
                expected: denoiser.seq_len(),
                found: p.len(),
            });
        }
    }
    let givens = puzzle.map(TokenSeq::from_board);
    let sampler = MlmSampler {
        schedule,
        stride,
        guidance,
    };
    let out = sampler.sample(denoiser, givens.as_ref(), rng)?;
    out.to_board(order)
}
