use super::{RateSchedule, SeddError};
use crate::diffusion::toy::EnumerableDist;
use crate::diffusion::{Denoiser, TokenSeq, MASK};
use crate::scalar::Scalar;
use std::marker::PhantomData;

/// Estimates of `p_t(x with x_i = v) / p_t(x)` for every masked position `i`
/// and digit `v`. Rows of unmasked positions are zero: under absorbing
/// corruption a decoded token never changes in reverse.
pub trait RatioModel: Sync {
    fn seq_len(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// `seq_len × num_classes` table, row-major.
    fn ratios(&self, x: &TokenSeq, t: f64) -> Result<Vec<f64>, SeddError>;

    /// Single ratio; a candidate equal to the current token has ratio 1.
    fn ratio(&self, x: &TokenSeq, t: f64, i: usize, v: u8) -> Result<f64, SeddError> {
        if x.get(i) == v {
            return Ok(1.0);
        }
        if v == MASK || !x.is_masked(i) {
            return Ok(0.0);
        }
        Ok(self.ratios(x, t)?[i * self.num_classes() + v as usize])
    }
}

impl<R: RatioModel + ?Sized> RatioModel for &R {
    fn seq_len(&self) -> usize {
        (**self).seq_len()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn ratios(&self, x: &TokenSeq, t: f64) -> Result<Vec<f64>, SeddError> {
        (**self).ratios(x, t)
    }
}

fn check_seq(x: &TokenSeq, len: usize, classes: usize) -> Result<(), SeddError> {
    if x.len() != len || x.num_classes() != classes {
        return Err(SeddError::Shape(format!(
            "sequence of length {} over {} classes, expected {len} over {classes}",
            x.len(),
            x.num_classes()
        )));
    }
    Ok(())
}

/// Exact ratios of the forward marginals of an enumerable data distribution,
/// `p_t(x) = Σ_{x0} p(x0) Π_i q_t(x_i | x0_i)`.
pub struct ExactRatioOracle<'a> {
    dist: &'a EnumerableDist,
    schedule: RateSchedule,
}

impl<'a> ExactRatioOracle<'a> {
    pub fn new(dist: &'a EnumerableDist, schedule: RateSchedule) -> Self {
        Self { dist, schedule }
    }

    /// `p_t(x)` for any sequence over the classes plus `MASK`.
    pub fn marginal(&self, x: &[u8], t: f64) -> f64 {
        let m = self.schedule.mask_prob(t);
        self.dist
            .support()
            .iter()
            .map(|(x0, p)| {
                p * x0
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| {
                        if b == MASK {
                            m
                        } else if a == b {
                            1.0 - m
                        } else {
                            0.0
                        }
                    })
                    .product::<f64>()
            })
            .sum()
    }
}

impl RatioModel for ExactRatioOracle<'_> {
    fn seq_len(&self) -> usize {
        self.dist.len()
    }

    fn num_classes(&self) -> usize {
        self.dist.num_classes()
    }

    fn ratios(&self, x: &TokenSeq, t: f64) -> Result<Vec<f64>, SeddError> {
        let (len, k) = (self.seq_len(), self.num_classes());
        check_seq(x, len, k)?;
        let mut out = vec![0.0; len * k];
        let base = self.marginal(x.tokens(), t);
        if base <= 0.0 {
            return Ok(out);
        }
        let mut y = x.tokens().to_vec();
        for i in x.masked_set() {
            for v in 0..k {
                y[i] = v as u8;
                out[i * k + v] = self.marginal(&y, t) / base;
            }
            y[i] = MASK;
        }
        Ok(out)
    }
}

/// Ratios from an MLM denoiser via the absorbing correspondence
/// `ratio(M → v) = p̃(x̃₀ᵢ = v | x_t) · (1 − m(t)) / m(t)`.
///
/// Continuous time maps to the denoiser's discrete timestep by matching mask
/// rates under the linear schedule, `t_d = clamp(round(m(t)·T), 1, T)`.
pub struct DenoiserRatios<'a, T, D: ?Sized> {
    denoiser: &'a D,
    schedule: RateSchedule,
    steps: usize,
    _scalar: PhantomData<fn() -> T>,
}

impl<'a, T: Scalar, D: Denoiser<T> + ?Sized> DenoiserRatios<'a, T, D> {
    pub fn new(denoiser: &'a D, schedule: RateSchedule, steps: usize) -> Self {
        Self {
            denoiser,
            schedule,
            steps: steps.max(1),
            _scalar: PhantomData,
        }
    }

    pub fn discrete_time(&self, t: f64) -> usize {
        let td = (self.schedule.mask_prob(t) * self.steps as f64).round() as usize;
        td.clamp(1, self.steps)
    }
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> RatioModel for DenoiserRatios<'_, T, D> {
    fn seq_len(&self) -> usize {
        self.denoiser.seq_len()
    }

    fn num_classes(&self) -> usize {
        self.denoiser.num_classes()
    }

    fn ratios(&self, x: &TokenSeq, t: f64) -> Result<Vec<f64>, SeddError> {
        let (len, k) = (self.seq_len(), self.num_classes());
        check_seq(x, len, k)?;
        let mut out = vec![0.0; len * k];
        let masked = x.masked_set();
        if masked.is_empty() {
            return Ok(out);
        }
        let m = self.schedule.mask_prob(t);
        let scale = (1.0 - m) / m;
        let probs = self.denoiser.denoise(x, self.discrete_time(t))?.probs();
        for i in masked {
            for (o, p) in out[i * k..(i + 1) * k].iter_mut().zip(probs.row(i)) {
                *o = p.as_f64() * scale;
            }
        }
        Ok(out)
    }
}
