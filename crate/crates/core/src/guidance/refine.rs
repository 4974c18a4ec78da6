use super::gumbel::{build_gumbel_softmax, gumbel_noise};
use super::{GuidanceConfig, GuidanceError, ValueFunction};
use crate::diffusion::{LogitGrid, TokenSeq};
use crate::grad::{Graph, Tensor};
use crate::scalar::Scalar;
use rand::Rng;

/// `Σ_rows KL(softmax(h0[r]) ‖ softmax(h[r]))`.
pub fn kl_logits<T: Scalar>(h0: &Tensor<T>, h: &Tensor<T>) -> Result<T, GuidanceError> {
    if h0.shape() != h.shape() || h0.rank() != 2 {
        return Err(GuidanceError::Shape(format!("{:?} vs {:?}", h0.shape(), h.shape())));
    }
    let mut g = Graph::new();
    let a = g.input(h0.clone());
    let b = g.input(h.clone());
    let kl = g.kl_softmax(a, b);
    Ok(g.value(kl).item())
}

/// Refines denoiser logits toward constraint satisfaction.
///
/// Each iteration relaxes the current logits with Gumbel-softmax, substitutes
/// one-hot rows for positions already decoded in `fixed`, and moves the free
/// rows by `η · ∇(v − λ·KL(π(h0) ‖ π(h)))`. Rows of decoded positions are
/// returned unchanged.
pub fn guided_refine<T: Scalar, R: Rng + ?Sized>(
    h0: &LogitGrid<T>,
    value: &dyn ValueFunction<T>,
    cfg: &GuidanceConfig,
    fixed: Option<&TokenSeq>,
    rng: &mut R,
) -> Result<LogitGrid<T>, GuidanceError> {
    cfg.validate()?;
    let (rows, classes) = (h0.rows(), h0.classes());
    let mut free = vec![true; rows];
    let mut fixed_rows = Tensor::<T>::zeros(&[rows, classes]);
    if let Some(x) = fixed {
        if x.len() != rows || x.num_classes() != classes {
            return Err(GuidanceError::Shape(format!(
                "state of length {} for {rows}×{classes} logits",
                x.len()
            )));
        }
        for (i, f) in free.iter_mut().enumerate() {
            if !x.is_masked(i) {
                *f = false;
                fixed_rows.row_mut(i)[x.get(i) as usize] = T::one();
            }
        }
    }
    if cfg.steps == 0 || !free.iter().any(|&f| f) {
        return Ok(h0.clone());
    }
    let free_mask = Tensor::from_fn(&[rows, classes], |i| {
        if free[i / classes] {
            T::one()
        } else {
            T::zero()
        }
    });
    let (eta, lambda, tau) = (T::lit(cfg.eta), T::lit(cfg.lambda), T::lit(cfg.tau));
    let mut noise = gumbel_noise(&[rows, classes], rng);
    let mut h = h0.tensor().clone();
    for step in 0..cfg.steps {
        if step > 0 && cfg.resample_noise {
            noise = gumbel_noise(&[rows, classes], rng);
        }
        let mut g = Graph::new();
        let hv = g.leaf(h.clone());
        let y = build_gumbel_softmax(&mut g, hv, &noise, tau, cfg.hard)?;
        let m = g.input(free_mask.clone());
        let f = g.input(fixed_rows.clone());
        let ym = g.mul(y, m);
        let relaxed = g.add(ym, f);
        let v = value.build(&mut g, relaxed)?;
        let anchor = g.input(h0.tensor().clone());
        let kl = g.kl_softmax(anchor, hv);
        let penalty = g.scale(kl, lambda);
        let objective = g.sub(v, penalty);
        g.backward(objective)?;
        let grad = g.grad_tensor(hv);
        for (i, (x, &d)) in h.data_mut().iter_mut().zip(grad.data()).enumerate() {
            if free[i / classes] {
                *x += eta * d;
            }
        }
        if !h.is_finite() {
            return Err(GuidanceError::NonFinite { step });
        }
    }
    LogitGrid::from_tensor(h).map_err(|e| GuidanceError::Shape(e.to_string()))
}
