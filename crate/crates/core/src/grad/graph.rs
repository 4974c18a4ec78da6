//! Tape of dense array operations with reverse-mode gradients.
//!
//! Nodes are appended in creation order, which is always a valid topological
//! order, so [`Graph::backward`] walks the tape once from the output down.

use super::params::ParamStore;
use super::tensor::{argmax, dot, log_softmax_rows, softmax_rows, Tensor};
use super::GradError;
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::sync::Arc;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One weighted cross-entropy term: `weight · −log softmax(logits[row])[class]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeTarget<T> {
    pub row: usize,
    pub class: usize,
    pub weight: T,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionShape {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Embedding {
        table: Var,
        indices: Vec<usize>,
    },
    GatherSum {
        x: Var,
        groups: Arc<Vec<Vec<usize>>>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    StraightThrough(Var),
    OneHotArgmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<CeTarget<T>>,
        probs: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttentionShape,
        probs: Vec<T>,
    },
    KlSoftmax {
        p: Var,
        q: Var,
        p_probs: Vec<T>,
        q_probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Embedding { .. } => "embedding",
            Op::GatherSum { .. } => "gather_sum",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::StraightThrough(..) => "straight_through",
            Op::OneHotArgmax(..) => "one_hot_argmax",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Attention { .. } => "attention",
            Op::KlSoftmax { .. } => "kl_softmax",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter as a differentiable leaf, once per graph.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var, GradError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| GradError::MissingParam(name.to_string()))?
            .clone();
        let v = self.leaf(value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Makes later [`param`](Self::param) lookups of `name` resolve to `v`.
    pub fn bind_param(&mut self, name: &str, v: Var) {
        self.params.insert(name.to_string(), v);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{op}: shape mismatch"
        );
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape(), data).expect("same shape");
        let g = self.any_grad(&[a, b]);
        self.push(out, op, g)
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(a).map(f);
        let g = self.any_grad(&[a]);
        self.push(out, op, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        self.zip_map(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `a[r, :] + bias` for every row of a matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let cols = self.value(a).cols();
        assert_eq!(self.value(bias).len(), cols, "add_row: bias length");
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(cols) {
            for (x, &y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        let g = self.any_grad(&[a, bias]);
        self.push(out, Op::AddRow(a, bias), g)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        assert_eq!(vb.rank(), 2, "matmul: rhs must be a matrix");
        assert_eq!(vb.shape()[0], k, "matmul: inner dimensions");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            va.data(),
            (k as isize, 1),
            vb.data(),
            (n as isize, 1),
            T::zero(),
            &mut out,
            (n as isize, 1),
        );
        let g = self.any_grad(&[a, b]);
        self.push(Tensor::new(&[m, n], out).unwrap(), Op::MatMul(a, b), g)
    }

    /// `x·w + b` with `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), |x| x.ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let g = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().copied().sum::<T>() / T::lit(v.len() as f64);
        let g = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), g)
    }

    /// Rows of `table` selected by `indices`.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            assert!(i < rows, "embedding index {i} out of range {rows}");
            out.extend_from_slice(t.row(i));
        }
        let g = self.any_grad(&[table]);
        let value = Tensor::new(&[indices.len(), d], out).unwrap();
        self.push(
            value,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            g,
        )
    }

    /// Row sums over index groups: `out[r] = Σ_{i ∈ groups[r]} x[i]`.
    pub fn gather_sum(&mut self, x: Var, groups: Arc<Vec<Vec<usize>>>) -> Var {
        let v = self.value(x);
        let d = v.cols();
        let mut out = vec![T::zero(); groups.len() * d];
        for (r, group) in groups.iter().enumerate() {
            let dst = &mut out[r * d..(r + 1) * d];
            for &i in group {
                for (o, &s) in dst.iter_mut().zip(v.row(i)) {
                    *o += s;
                }
            }
        }
        let g = self.any_grad(&[x]);
        let value = Tensor::new(&[groups.len(), d], out).unwrap();
        self.push(value, Op::GatherSum { x, groups }, g)
    }

    /// Normalizes each row, then applies `gamma`, `beta` per column.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let v = self.value(x);
        let (m, n) = (v.rows(), v.cols());
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        assert_eq!(gm.len(), n, "layer_norm: gamma length");
        assert_eq!(bt.len(), n, "layer_norm: beta length");
        let nf = T::lit(n as f64);
        let eps = T::lit(LAYER_NORM_EPS);
        let mut xhat = vec![T::zero(); m * n];
        let mut rstd = vec![T::zero(); m];
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let row = v.row(r);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / nf;
            let rs = (var + eps).sqrt().recip();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * gm[c] + bt[c];
            }
        }
        let g = self.any_grad(&[x, gamma, beta]);
        let value = Tensor::new(v.shape(), out).unwrap();
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            g,
        )
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        softmax_rows(out.data_mut(), cols);
        let g = self.any_grad(&[a]);
        self.push(out, Op::Softmax(a), g)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        log_softmax_rows(out.data_mut(), cols);
        let g = self.any_grad(&[a]);
        self.push(out, Op::LogSoftmax(a), g)
    }

    /// Forward: one-hot argmax per row. Backward: identity onto `soft`.
    pub fn straight_through(&mut self, soft: Var) -> Var {
        let out = one_hot_rows(self.value(soft));
        let g = self.any_grad(&[soft]);
        self.push(out, Op::StraightThrough(soft), g)
    }

    /// Hard one-hot argmax per row, without a gradient.
    pub fn one_hot_argmax(&mut self, a: Var) -> Var {
        let out = one_hot_rows(self.value(a));
        let g = self.any_grad(&[a]);
        self.push(out, Op::OneHotArgmax(a), g)
    }

    /// `Σ weight · −log softmax(logits[row])[class]` over the given targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<CeTarget<T>>) -> Var {
        let v = self.value(logits);
        let cols = v.cols();
        let mut logp = v.data().to_vec();
        log_softmax_rows(&mut logp, cols);
        let mut loss = T::zero();
        for t in &targets {
            assert!(t.row < v.rows() && t.class < cols, "cross_entropy: target out of range");
            loss -= t.weight * logp[t.row * cols + t.class];
        }
        let probs = logp.into_iter().map(T::exp).collect();
        let g = self.any_grad(&[logits]);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
            g,
        )
    }

    /// Multi-head scaled dot-product self-attention on `[batch·seq, dim]`
    /// projections; each batch item attends only within itself.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttentionShape) -> Var {
        let AttentionShape { batch, seq, heads } = shape;
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let dim = vq.cols();
        assert_eq!(vq.rows(), batch * seq, "attention: rows");
        assert_eq!(vq.shape(), vk.shape(), "attention: q/k shape");
        assert_eq!(vq.shape(), vv.shape(), "attention: q/v shape");
        assert_eq!(dim % heads, 0, "attention: dim not divisible by heads");
        let dh = dim / heads;
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let (qd, kd, vd) = (vq.data(), vk.data(), vv.data());
        let mut probs = vec![T::zero(); batch * heads * seq * seq];
        let mut out = vec![T::zero(); batch * seq * dim];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                let pbase = (b * heads + h) * seq * seq;
                for i in 0..seq {
                    let qi = &qd[(b * seq + i) * dim + off..][..dh];
                    let prow = &mut probs[pbase + i * seq..][..seq];
                    for (j, p) in prow.iter_mut().enumerate() {
                        *p = dot(qi, &kd[(b * seq + j) * dim + off..][..dh]) * scale;
                    }
                    softmax_rows(prow, seq);
                    let orow = &mut out[(b * seq + i) * dim + off..][..dh];
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &vd[(b * seq + j) * dim + off..][..dh];
                        for (o, &x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let g = self.any_grad(&[q, k, v]);
        let value = Tensor::new(&[batch * seq, dim], out).unwrap();
        self.push(
            value,
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            },
            g,
        )
    }

    /// `Σ_rows KL(softmax(p[r]) ‖ softmax(q[r]))`.
    pub fn kl_softmax(&mut self, p: Var, q: Var) -> Var {
        self.same_shape(p, q, "kl_softmax");
        let cols = self.value(p).cols();
        let mut lp = self.value(p).data().to_vec();
        let mut lq = self.value(q).data().to_vec();
        log_softmax_rows(&mut lp, cols);
        log_softmax_rows(&mut lq, cols);
        let kl = lp
            .iter()
            .zip(&lq)
            .map(|(&a, &b)| {
                let pa = a.exp();
                if pa > T::zero() {
                    pa * (a - b)
                } else {
                    T::zero()
                }
            })
            .sum();
        let g = self.any_grad(&[p, q]);
        self.push(
            Tensor::scalar(kl),
            Op::KlSoftmax {
                p,
                q,
                p_probs: lp.into_iter().map(T::exp).collect(),
                q_probs: lq.into_iter().map(T::exp).collect(),
            },
            g,
        )
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor shaped like the node; zeros if none reached it.
    pub fn grad_tensor(&self, v: Var) -> Tensor<T> {
        let shape = self.value(v).shape();
        match self.grad(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).unwrap(),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradients of every bound parameter, sorted by name.
    pub fn param_grads(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .map(|(name, &v)| (name.clone(), self.grad_tensor(v)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Accumulates `d output / d node` for every node the output depends on.
    pub fn backward(&mut self, output: Var) -> Result<(), GradError> {
        let shape = self.value(output).shape().to_vec();
        if self.value(output).len() != 1 {
            return Err(GradError::NonScalarOutput(shape));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(vec![T::one()]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(up) = self.grads[i].take() else {
                continue;
            };
            let (lower, _) = self.grads.split_at_mut(i);
            let node = &self.nodes[i];
            let result = backprop(&self.nodes, node, &up, lower);
            self.grads[i] = Some(up);
            result?;
        }
        Ok(())
    }
}

fn one_hot_rows<T: Scalar>(v: &Tensor<T>) -> Tensor<T> {
    let cols = v.cols();
    let mut out = Tensor::zeros(v.shape());
    for r in 0..v.rows() {
        let j = argmax(v.row(r));
        out.data_mut()[r * cols + j] = T::one();
    }
    out
}

/// Mutable gradient buffer of a parent, created on first use. `None` when the
/// parent does not take gradients.
fn slot<'a, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
}

fn backprop<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    up: &[T],
    grads: &mut [Option<Vec<T>>],
) -> Result<(), GradError> {
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(g) = slot(nodes, grads, *v) {
                    g.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(g) = slot(nodes, grads, *a) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
            }
            if let Some(g) = slot(nodes, grads, *b) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g -= u);
            }
        }
        Op::Mul(a, b) => {
            for (x, y) in [(a, b), (b, a)] {
                if let Some(g) = slot(nodes, grads, *x) {
                    let other = val(*y).data();
                    for ((g, &u), &o) in g.iter_mut().zip(up).zip(other) {
                        *g += u * o;
                    }
                }
            }
        }
        Op::AddRow(a, bias) => {
            if let Some(g) = slot(nodes, grads, *a) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
            }
            if let Some(g) = slot(nodes, grads, *bias) {
                let cols = g.len();
                for row in up.chunks(cols) {
                    g.iter_mut().zip(row).for_each(|(g, &u)| *g += u);
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(g) = slot(nodes, grads, *a) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g += u * *c);
            }
        }
        Op::AddScalar(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
            }
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (m, k, n) = (va.rows(), va.cols(), vb.cols());
            if let Some(g) = slot(nodes, grads, *a) {
                // dA = dC · Bᵀ
                T::gemm(
                    m,
                    n,
                    k,
                    T::one(),
                    up,
                    (n as isize, 1),
                    vb.data(),
                    (1, n as isize),
                    T::one(),
                    g,
                    (k as isize, 1),
                );
            }
            if let Some(g) = slot(nodes, grads, *b) {
                // dB = Aᵀ · dC
                T::gemm(
                    k,
                    m,
                    n,
                    T::one(),
                    va.data(),
                    (1, k as isize),
                    up,
                    (n as isize, 1),
                    T::one(),
                    g,
                    (n as isize, 1),
                );
            }
        }
        Op::Relu(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                // select rather than branch: the sign pattern is close to random
                for ((g, &u), &x) in g.iter_mut().zip(up).zip(val(*a).data()) {
                    *g += if x > T::zero() { u } else { T::zero() };
                }
            }
        }
        Op::Exp(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                for ((g, &u), &y) in g.iter_mut().zip(up).zip(node.value.data()) {
                    *g += u * y;
                }
            }
        }
        Op::Log(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                for ((g, &u), &x) in g.iter_mut().zip(up).zip(val(*a).data()) {
                    *g += u / x;
                }
            }
        }
        Op::Square(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                let two = T::lit(2.0);
                for ((g, &u), &x) in g.iter_mut().zip(up).zip(val(*a).data()) {
                    *g += two * x * u;
                }
            }
        }
        Op::Sum(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                g.iter_mut().for_each(|g| *g += up[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                let s = up[0] / T::lit(g.len() as f64);
                g.iter_mut().for_each(|g| *g += s);
            }
        }
        Op::Embedding { table, indices } => {
            if let Some(g) = slot(nodes, grads, *table) {
                let d = val(*table).cols();
                for (r, &i) in indices.iter().enumerate() {
                    let src = &up[r * d..(r + 1) * d];
                    g[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(g, &u)| *g += u);
                }
            }
        }
        Op::GatherSum { x, groups } => {
            if let Some(g) = slot(nodes, grads, *x) {
                let d = val(*x).cols();
                for (r, group) in groups.iter().enumerate() {
                    let src = &up[r * d..(r + 1) * d];
                    for &i in group {
                        g[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(g, &u)| *g += u);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let n = val(*x).cols();
            let gm = val(*gamma).data();
            if let Some(g) = slot(nodes, grads, *beta) {
                for row in up.chunks(n) {
                    g.iter_mut().zip(row).for_each(|(g, &u)| *g += u);
                }
            }
            if let Some(g) = slot(nodes, grads, *gamma) {
                for (row, h) in up.chunks(n).zip(xhat.chunks(n)) {
                    for ((g, &u), &h) in g.iter_mut().zip(row).zip(h) {
                        *g += u * h;
                    }
                }
            }
            if let Some(g) = slot(nodes, grads, *x) {
                let nf = T::lit(n as f64);
                for (r, (urow, hrow)) in up.chunks(n).zip(xhat.chunks(n)).enumerate() {
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for c in 0..n {
                        let d = urow[c] * gm[c];
                        mean_d += d;
                        mean_dh += d * hrow[c];
                    }
                    mean_d /= nf;
                    mean_dh /= nf;
                    let grow = &mut g[r * n..(r + 1) * n];
                    for c in 0..n {
                        let d = urow[c] * gm[c];
                        grow[c] += rstd[r] * (d - mean_d - hrow[c] * mean_dh);
                    }
                }
            }
        }
        Op::Softmax(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                let n = node.value.cols();
                for ((grow, urow), yrow) in g
                    .chunks_mut(n)
                    .zip(up.chunks(n))
                    .zip(node.value.data().chunks(n))
                {
                    let dot: T = urow.iter().zip(yrow).map(|(&u, &y)| u * y).sum();
                    for ((g, &u), &y) in grow.iter_mut().zip(urow).zip(yrow) {
                        *g += y * (u - dot);
                    }
                }
            }
        }
        Op::LogSoftmax(a) => {
            if let Some(g) = slot(nodes, grads, *a) {
                let n = node.value.cols();
                for ((grow, urow), yrow) in g
                    .chunks_mut(n)
                    .zip(up.chunks(n))
                    .zip(node.value.data().chunks(n))
                {
                    let total: T = urow.iter().copied().sum();
                    for ((g, &u), &y) in grow.iter_mut().zip(urow).zip(yrow) {
                        *g += u - y.exp() * total;
                    }
                }
            }
        }
        Op::StraightThrough(soft) => {
            if let Some(g) = slot(nodes, grads, *soft) {
                g.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
            }
        }
        Op::OneHotArgmax(a) => {
            if nodes[a.0].needs_grad {
                return Err(GradError::NotDifferentiable(node.op.name()));
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            if let Some(g) = slot(nodes, grads, *logits) {
                let cols = val(*logits).cols();
                for t in targets {
                    let w = t.weight * up[0];
                    let base = t.row * cols;
                    for c in 0..cols {
                        g[base + c] += w * probs[base + c];
                    }
                    g[base + t.class] -= w;
                }
            }
        }
        Op::Attention {
            q,
            k,
            v,
            shape,
            probs,
        } => attention_backward(nodes, grads, up, (*q, *k, *v), *shape, probs),
        Op::KlSoftmax {
            p,
            q,
            p_probs,
            q_probs,
        } => {
            let cols = val(*p).cols();
            if let Some(g) = slot(nodes, grads, *q) {
                for ((g, &pp), &qq) in g.iter_mut().zip(p_probs).zip(q_probs) {
                    *g += up[0] * (qq - pp);
                }
            }
            if let Some(g) = slot(nodes, grads, *p) {
                for ((grow, prow), qrow) in g
                    .chunks_mut(cols)
                    .zip(p_probs.chunks(cols))
                    .zip(q_probs.chunks(cols))
                {
                    let d: Vec<T> = prow
                        .iter()
                        .zip(qrow)
                        .map(|(&a, &b)| if a > T::zero() { a.ln() - b.ln() } else { T::zero() })
                        .collect();
                    let avg: T = prow.iter().zip(&d).map(|(&a, &x)| a * x).sum();
                    for ((g, &a), &x) in grow.iter_mut().zip(prow).zip(&d) {
                        *g += up[0] * a * (x - avg);
                    }
                }
            }
        }
    }
    Ok(())
}

fn attention_backward<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    up: &[T],
    (q, k, v): (Var, Var, Var),
    shape: AttentionShape,
    probs: &[T],
) {
    let AttentionShape { batch, seq, heads } = shape;
    let (qd, kd, vd) = (
        nodes[q.0].value.data(),
        nodes[k.0].value.data(),
        nodes[v.0].value.data(),
    );
    let dim = nodes[q.0].value.cols();
    let dh = dim / heads;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut gq = vec![T::zero(); qd.len()];
    let mut gk = vec![T::zero(); kd.len()];
    let mut gv = vec![T::zero(); vd.len()];
    let mut ds = vec![T::zero(); seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * dh;
            let pbase = (b * heads + h) * seq * seq;
            let at = |i: usize| (b * seq + i) * dim + off;
            for i in 0..seq {
                let prow = &probs[pbase + i * seq..][..seq];
                let ui = &up[at(i)..][..dh];
                for j in 0..seq {
                    ds[j] = dot(ui, &vd[at(j)..][..dh]);
                    let gvj = &mut gv[at(j)..][..dh];
                    for (g, &u) in gvj.iter_mut().zip(ui) {
                        *g += prow[j] * u;
                    }
                }
                let mean = dot(prow, &ds);
                let qi = &qd[at(i)..][..dh];
                for j in 0..seq {
                    let s = prow[j] * (ds[j] - mean) * scale;
                    if s == T::zero() {
                        continue;
                    }
                    let kj = &kd[at(j)..][..dh];
                    for (g, &k) in gq[at(i)..][..dh].iter_mut().zip(kj) {
                        *g += s * k;
                    }
                    for (g, &q) in gk[at(j)..][..dh].iter_mut().zip(qi) {
                        *g += s * q;
                    }
                }
            }
        }
    }
    for (var, local) in [(q, gq), (k, gk), (v, gv)] {
        if let Some(g) = slot(nodes, grads, var) {
            g.iter_mut().zip(local).for_each(|(g, l)| *g += l);
        }
    }
}
