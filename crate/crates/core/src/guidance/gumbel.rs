use super::GuidanceError;
use crate::grad::{Graph, Tensor, Var};
use crate::scalar::Scalar;
use rand::Rng;

/// Standard Gumbel draws `−ln(−ln u)` with `u` uniform on the open unit interval.
pub fn gumbel_noise<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let u: f64 = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        T::lit(-(-u.ln()).ln())
    })
}

/// Appends `softmax((log_softmax(h) + noise) / τ)` to `g`. With `hard` the
/// forward value is its row-wise one-hot argmax, with a straight-through gradient.
pub fn build_gumbel_softmax<T: Scalar>(
    g: &mut Graph<T>,
    h: Var,
    noise: &Tensor<T>,
    tau: T,
    hard: bool,
) -> Result<Var, GuidanceError> {
    if g.value(h).shape() != noise.shape() {
        return Err(GuidanceError::Shape(format!(
            "logits {:?} vs noise {:?}",
            g.value(h).shape(),
            noise.shape()
        )));
    }
    if !(tau > T::zero()) {
        return Err(GuidanceError::BadConfig("tau must be positive".into()));
    }
    let logp = g.log_softmax(h);
    let n = g.input(noise.clone());
    let z = g.add(logp, n);
    let z = g.scale(z, T::one() / tau);
    let y = g.softmax(z);
    Ok(if hard { g.straight_through(y) } else { y })
}

pub fn gumbel_softmax_with_noise<T: Scalar>(
    h: &Tensor<T>,
    noise: &Tensor<T>,
    tau: T,
    hard: bool,
) -> Result<Tensor<T>, GuidanceError> {
    let mut g = Graph::new();
    let x = g.input(h.clone());
    let y = build_gumbel_softmax(&mut g, x, noise, tau, hard)?;
    Ok(g.value(y).clone())
}

pub fn gumbel_softmax<T: Scalar, R: Rng + ?Sized>(
    h: &Tensor<T>,
    tau: T,
    hard: bool,
    rng: &mut R,
) -> Result<Tensor<T>, GuidanceError> {
    let noise = gumbel_noise(h.shape(), rng);
    gumbel_softmax_with_noise(h, &noise, tau, hard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check::max_gradient_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn argmax(row: &[f64]) -> usize {
        let mut best = 0;
        for (i, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = i;
            }
        }
        best
    }

    #[test]
    fn rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Tensor::from_fn(&[5, 4], |i| (i as f64 * 0.7).sin() * 3.0);
        let y = gumbel_softmax(&h, 0.5, false, &mut rng).unwrap();
        for r in 0..5 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn low_temperature_approaches_perturbed_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Tensor::from_fn(&[50, 5], |i| ((i * 37 % 11) as f64) * 0.3);
        let noise = gumbel_noise::<f64, _>(&[50, 5], &mut rng);
        let y = gumbel_softmax_with_noise(&h, &noise, 0.01, false).unwrap();
        for r in 0..50 {
            let lse = h.row(r).iter().map(|x| x.exp()).sum::<f64>().ln();
            let z: Vec<f64> = h.row(r).iter().zip(noise.row(r)).map(|(a, b)| a - lse + b).collect();
            let k = argmax(&z);
            let mut sorted = z.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            // the deviation from one-hot is at most (K−1)·exp(−gap/τ)
            if sorted[0] - sorted[1] > 0.2 {
                for (j, &yj) in y.row(r).iter().enumerate() {
                    let want = (j == k) as u8 as f64;
                    assert!((yj - want).abs() < 1e-6, "row {r}");
                }
            }
        }
    }

    #[test]
    fn hard_draws_follow_softmax() {
        // Gumbel-max: argmax(log p + g) ~ p. Pearson χ² with 2 dof, 99.9% cutoff 13.82.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.2, 0.3, 0.5];
        let h = Tensor::new(&[1, 3], p.iter().map(|x: &f64| x.ln()).collect()).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let y = gumbel_softmax(&h, 0.5, true, &mut rng).unwrap();
            assert_eq!(y.row(0).iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(y.row(0).iter().filter(|&&x| x == 0.0).count(), 2);
            counts[argmax(y.row(0))] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(p)
            .map(|(&c, q)| {
                let e = q * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 13.82, "χ² = {chi2}, counts {counts:?}");
    }

    #[test]
    fn equal_logits_without_noise_split_evenly() {
        let h = Tensor::new(&[1, 2], vec![0.3, 0.3]).unwrap();
        let zero = Tensor::<f64>::zeros(&[1, 2]);
        for tau in [0.01, 0.5, 1.0, 10.0] {
            let y = gumbel_softmax_with_noise(&h, &zero, tau, false).unwrap();
            assert_eq!(y.row(0), &[0.5, 0.5]);
        }
    }

    #[test]
    fn hard_backward_matches_soft_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = Tensor::from_fn(&[4, 3], |i| (i as f64 * 1.3).sin());
        let noise = gumbel_noise::<f64, _>(&[4, 3], &mut rng);
        let w = Tensor::from_fn(&[4, 3], |i| i as f64 - 5.0);
        let grad = |hard: bool| {
            let mut g = Graph::new();
            let x = g.leaf(h.clone());
            let y = build_gumbel_softmax(&mut g, x, &noise, 0.5, hard).unwrap();
            let c = g.input(w.clone());
            let prod = g.mul(y, c);
            let out = g.sum(prod);
            g.backward(out).unwrap();
            g.grad_tensor(x)
        };
        assert_eq!(grad(true), grad(false));
    }

    #[test]
    fn symmetric_logits_give_symmetric_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Tensor::<f64>::zeros(&[1, 3]);
        let n = 20_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let y = gumbel_softmax(&h, 1.0, false, &mut rng).unwrap();
            for (m, &x) in mean.iter_mut().zip(y.row(0)) {
                *m += x / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01, "{mean:?}");
        }
    }

    #[test]
    fn relaxation_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Tensor::from_fn(&[3, 4], |i| (i as f64).cos());
        let noise = gumbel_noise::<f64, _>(&[3, 4], &mut rng);
        let w = Tensor::from_fn(&[3, 4], |i| i as f64 * 0.1 - 0.5);
        let e = max_gradient_error(&[h], |g, v| {
            let y = build_gumbel_softmax(g, v[0], &noise, 0.7, false).unwrap();
            let c = g.input(w.clone());
            let prod = g.mul(y, c);
            g.sum(prod)
        });
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn rejects_mismatched_noise_and_bad_tau() {
        let h = Tensor::<f64>::zeros(&[2, 3]);
        let noise = Tensor::<f64>::zeros(&[3, 2]);
        assert!(gumbel_softmax_with_noise(&h, &noise, 0.5, false).is_err());
        let noise = Tensor::<f64>::zeros(&[2, 3]);
        assert!(gumbel_softmax_with_noise(&h, &noise, 0.0, false).is_err());
    }
}
