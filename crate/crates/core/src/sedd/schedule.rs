use super::SeddError;

/// Masking rate `σ(t)` of the forward chain, with `Σ(t) = ∫₀ᵗ σ` in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSchedule {
    Constant { sigma: f64 },
    /// `Σ(t) = σ_min^{1−t} σ_max^t − σ_min`.
    Geometric { sigma_min: f64, sigma_max: f64 },
}

impl Default for RateSchedule {
    /// Constant rate with `m(1) = 1 − e^{−14} ≥ 1 − 1e-6`.
    fn default() -> Self {
        RateSchedule::Constant { sigma: 14.0 }
    }
}

impl RateSchedule {
    /// Constant rate giving `m(horizon) = 1 − e^{−14}`.
    pub fn for_horizon(horizon: f64) -> Self {
        RateSchedule::Constant {
            sigma: 14.0 / horizon,
        }
    }

    pub fn validate(&self) -> Result<(), SeddError> {
        let ok = match *self {
            RateSchedule::Constant { sigma } => sigma > 0.0 && sigma.is_finite(),
            RateSchedule::Geometric {
                sigma_min,
                sigma_max,
            } => sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SeddError::BadConfig(format!("invalid rate schedule {self:?}")))
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match *self {
            RateSchedule::Constant { sigma } => sigma,
            RateSchedule::Geometric {
                sigma_min,
                sigma_max,
            } => sigma_min.powf(1.0 - t) * sigma_max.powf(t) * (sigma_max / sigma_min).ln(),
        }
    }

    /// `Σ(t)`.
    pub fn total(&self, t: f64) -> f64 {
        match *self {
            RateSchedule::Constant { sigma } => sigma * t,
            RateSchedule::Geometric {
                sigma_min,
                sigma_max,
            } => sigma_min.powf(1.0 - t) * sigma_max.powf(t) - sigma_min,
        }
    }

    /// `m(t) = 1 − exp(−Σ(t))`, the probability that a token is absorbed by `t`.
    pub fn mask_prob(&self, t: f64) -> f64 {
        -(-self.total(t)).exp_m1()
    }
}
