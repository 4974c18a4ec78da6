use super::DiffusionError;
use crate::scalar::Scalar;

/// How per-step mask probabilities are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// `β_t = 1/(T − t + 1)`, giving cumulative mask probability `t/T`.
    LinearMask,
    /// Explicit `β_1..β_T`.
    Custom(Vec<f64>),
}

/// Discrete-time absorbing schedule.
///
/// `cum_mask[t]` is the probability that a token is `MASK` after `t` forward
/// steps: `m̄_0 = 0`, `m̄_t = m̄_{t−1} + β_t (1 − m̄_{t−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    betas: Vec<T>,
    cum_mask: Vec<T>,
}

pub fn make_schedule<T: Scalar>(steps: usize, kind: ScheduleKind) -> Result<Schedule<T>, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::BadSchedule("T must be at least 1".into()));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::LinearMask => (1..=steps).map(|t| 1.0 / (steps - t + 1) as f64).collect(),
        ScheduleKind::Custom(b) => {
            if b.len() != steps {
                return Err(DiffusionError::BadSchedule(format!(
                    "{} betas for T = {steps}",
                    b.len()
                )));
            }
            b
        }
    };
    if let Some((i, b)) = betas
        .iter()
        .enumerate()
        .find(|(_, b)| !(0.0..=1.0).contains(*b))
    {
        return Err(DiffusionError::BadSchedule(format!("beta_{} = {b} outside [0, 1]", i + 1)));
    }
    let mut cum = Vec::with_capacity(steps + 1);
    cum.push(0.0f64);
    for &b in &betas {
        let prev = *cum.last().unwrap();
        cum.push(prev + b * (1.0 - prev));
    }
    let last = cum[steps];
    if (last - 1.0).abs() > 1e-12 {
        return Err(DiffusionError::BadSchedule(format!(
            "cumulative mask probability at T is {last}, not 1"
        )));
    }
    Ok(Schedule {
        betas: betas.into_iter().map(T::lit).collect(),
        cum_mask: cum.into_iter().map(T::lit).collect(),
    })
}

impl<T: Scalar> Schedule<T> {
    pub fn linear(steps: usize) -> Result<Self, DiffusionError> {
        make_schedule(steps, ScheduleKind::LinearMask)
    }

    /// `T`.
    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> T {
        self.betas[t - 1]
    }

    /// `m̄_t` for `0 ≤ t ≤ T`.
    pub fn cum_mask(&self, t: usize) -> T {
        self.cum_mask[t]
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }
}
