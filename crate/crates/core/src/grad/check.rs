//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used, so these checks stay independent of the
//! backward rules they verify.

use super::{Graph, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;

/// Elementwise relative error `|a − n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central-difference gradient of a scalar function of several inputs.
pub fn numeric_gradient<F>(inputs: &[Tensor<f64>], f: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars);
        g.value(out).item()
    };
    let mut xs = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for k in 0..xs.len() {
        let mut gk = Vec::with_capacity(xs[k].len());
        for i in 0..xs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_STEP;
            let up = eval(&xs);
            xs[k].data_mut()[i] = orig - FD_STEP;
            let down = eval(&xs);
            xs[k].data_mut()[i] = orig;
            gk.push((up - down) / (2.0 * FD_STEP));
        }
        grads.push(gk);
    }
    grads
}

/// Reverse-mode gradient of the same function.
pub fn analytic_gradient<F>(inputs: &[Tensor<f64>], f: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars);
    g.backward(out).expect("differentiable function");
    vars.iter().map(|&v| g.grad_tensor(v).into_data()).collect()
}

/// Largest elementwise relative error between reverse-mode and central differences.
pub fn max_gradient_error<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let a = analytic_gradient(inputs, &f);
    let n = numeric_gradient(inputs, &f);
    a.iter()
        .flatten()
        .zip(n.iter().flatten())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}
