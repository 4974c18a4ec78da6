//! A small learned value function: every group's soft digit-count vector goes
//! through a shared two-layer MLP and the per-group outputs are summed.

use super::value::one_hot_board;
use super::{GuidanceError, ValueFunction};
use crate::grad::{
    config_field, parse_config_snapshot, AdamConfig, Checkpoint, Graph, ParamStore, Tensor, Var,
};
use crate::scalar::Scalar;
use crate::sudoku::{count_violations, Board, GroupTable};
use rand::seq::index::sample;
use rand::Rng;
use std::sync::Arc;

pub const VALUE_KIND: &str = "value-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueNetConfig {
    pub order: usize,
    pub hidden: usize,
}

impl ValueNetConfig {
    pub fn new(order: usize) -> Self {
        Self { order, hidden: 32 }
    }

    pub fn to_snapshot(&self) -> String {
        format!("order={}\nhidden={}\n", self.order, self.hidden)
    }

    pub fn from_snapshot(text: &str) -> Result<Self, GuidanceError> {
        let map = parse_config_snapshot(text)?;
        Ok(Self {
            order: config_field(&map, "order")?,
            hidden: config_field(&map, "hidden")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Corrupted cells per example are drawn uniformly from `0..=max_corrupt`.
    pub max_corrupt: usize,
}

impl Default for ValueTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 32,
            lr: 3e-3,
            max_corrupt: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnedValue<T: Scalar> {
    config: ValueNetConfig,
    params: ParamStore<T>,
    groups: Arc<Vec<Vec<usize>>>,
}

impl<T: Scalar> LearnedValue<T> {
    pub fn new<R: Rng>(config: ValueNetConfig, rng: &mut R) -> Result<Self, GuidanceError> {
        let side = config.order * config.order;
        let h = config.hidden;
        let mut params = ParamStore::new();
        params.insert_normal("w1", &[side, h], (2.0 / side as f64).sqrt(), rng)?;
        params.insert_full("b1", &[h], 0.0)?;
        params.insert_normal("w2", &[h, 1], (1.0 / h as f64).sqrt(), rng)?;
        params.insert_full("b2", &[1], 0.0)?;
        Ok(Self::with_params(config, params))
    }

    fn with_params(config: ValueNetConfig, params: ParamStore<T>) -> Self {
        let table = GroupTable::new(config.order);
        Self {
            config,
            params,
            groups: Arc::new(table.groups().to_vec()),
        }
    }

    pub fn config(&self) -> &ValueNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint::from_store(VALUE_KIND, &self.config.to_snapshot(), &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<T>) -> Result<Self, GuidanceError> {
        ckpt.expect_kind(VALUE_KIND)?;
        let config = ValueNetConfig::from_snapshot(&ckpt.config)?;
        let params = ckpt.to_store()?;
        let side = config.order * config.order;
        let expect = [
            ("w1", vec![side, config.hidden]),
            ("b1", vec![config.hidden]),
            ("w2", vec![config.hidden, 1]),
            ("b2", vec![1]),
        ];
        for (name, shape) in expect {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                _ => return Err(GuidanceError::Shape(format!("parameter {name} missing or misshapen"))),
            }
        }
        Ok(Self::with_params(config, params))
    }

    /// Network output on a batch of relaxed boards stacked as `[B·N², N]`; returns `[B, 1]`.
    fn forward(&self, g: &mut Graph<T>, stacked: Var, batch: usize) -> Result<Var, GuidanceError> {
        let side = self.config.order * self.config.order;
        let cells = side * side;
        if g.value(stacked).shape() != [batch * cells, side] {
            return Err(GuidanceError::Shape(format!(
                "relaxed batch {:?}, expected [{}, {side}]",
                g.value(stacked).shape(),
                batch * cells
            )));
        }
        let groups = if batch == 1 {
            self.groups.clone()
        } else {
            Arc::new(
                (0..batch)
                    .flat_map(|b| {
                        self.groups
                            .iter()
                            .map(move |grp| grp.iter().map(|&c| b * cells + c).collect())
                    })
                    .collect(),
            )
        };
        let per_board = 3 * side;
        let counts = g.gather_sum(stacked, groups);
        let w1 = g.param(&self.params, "w1")?;
        let b1 = g.param(&self.params, "b1")?;
        let w2 = g.param(&self.params, "w2")?;
        let b2 = g.param(&self.params, "b2")?;
        let hidden = g.linear(counts, w1, b1);
        let hidden = g.relu(hidden);
        let out = g.linear(hidden, w2, b2);
        let boards = Arc::new(
            (0..batch)
                .map(|b| (b * per_board..(b + 1) * per_board).collect())
                .collect(),
        );
        Ok(g.gather_sum(out, boards))
    }

    /// Predicted value of a complete or partial board (empty cells are uniform rows).
    pub fn score(&self, board: &Board) -> Result<T, GuidanceError> {
        self.evaluate(&one_hot_board(board))
    }
}

impl<T: Scalar> ValueFunction<T> for LearnedValue<T> {
    fn build(&self, g: &mut Graph<T>, relaxed: Var) -> Result<Var, GuidanceError> {
        let v = self.forward(g, relaxed, 1)?;
        Ok(g.sum(v))
    }
}

/// Overwrites `k` distinct random cells with uniformly random digits.
pub fn corrupt_board<R: Rng>(board: &Board, k: usize, rng: &mut R) -> Board {
    let mut out = board.clone();
    let side = board.side() as u8;
    for i in sample(rng, board.len(), k.min(board.len())) {
        out.set(i, rng.gen_range(1..=side));
    }
    out
}

/// Fits a value net to `−violations` on corrupted copies of `solutions`.
/// Returns the model and the per-step mean squared error.
pub fn train_value_net<T: Scalar, R: Rng>(
    net: &mut LearnedValue<T>,
    solutions: &[Board],
    cfg: &ValueTrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, GuidanceError> {
    if solutions.is_empty() || cfg.batch == 0 {
        return Err(GuidanceError::EmptyDataset);
    }
    let order = net.config.order;
    if let Some(b) = solutions.iter().find(|b| b.order() != order) {
        return Err(GuidanceError::Shape(format!(
            "board of order {} for a value net of order {order}",
            b.order()
        )));
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let side = order * order;
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut data = Vec::with_capacity(cfg.batch * side * side * side);
        let mut labels = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let base = &solutions[rng.gen_range(0..solutions.len())];
            let k = rng.gen_range(0..=cfg.max_corrupt);
            let b = corrupt_board(base, k, rng);
            labels.push(-T::lit(count_violations(&b) as f64));
            data.extend_from_slice(one_hot_board::<T>(&b).data());
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::new(&[cfg.batch * side * side, side], data)?);
        let pred = net.forward(&mut g, x, cfg.batch)?;
        let y = g.input(Tensor::new(&[cfg.batch, 1], labels)?);
        let diff = g.sub(pred, y);
        let sq = g.square(diff);
        let loss = g.mean(sq);
        g.backward(loss)?;
        losses.push(g.value(loss).item().as_f64());
        net.params.adam_step(&g.param_grads(), &adam)?;
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check::max_gradient_error;
    use crate::sudoku::random_solution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        fn ranks(x: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap());
            let mut r = vec![0.0; x.len()];
            let mut i = 0;
            while i < idx.len() {
                let mut j = i;
                while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0;
                for &k in &idx[i..=j] {
                    r[k] = avg;
                }
                i = j + 1;
            }
            r
        }
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn learns_violation_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sols: Vec<Board> = (0..50).map(|_| random_solution(2, &mut rng).unwrap()).collect();
        let mut net = LearnedValue::<f64>::new(ValueNetConfig::new(2), &mut rng).unwrap();
        let cfg = ValueTrainConfig {
            steps: 1500,
            ..ValueTrainConfig::default()
        };
        let losses = train_value_net(&mut net, &sols, &cfg, &mut rng).unwrap();
        assert!(losses.last().unwrap() < &losses[0]);

        let mut truth = Vec::new();
        let mut pred = Vec::new();
        let mut on_solutions = 0.0;
        for (i, s) in sols.iter().enumerate() {
            on_solutions += net.score(s).unwrap() / sols.len() as f64;
            for k in 1..=8 {
                let b = corrupt_board(s, k, &mut ChaCha8Rng::seed_from_u64((i * 10 + k) as u64));
                truth.push(-(count_violations(&b) as f64));
                pred.push(net.score(&b).unwrap());
            }
        }
        assert!(on_solutions.abs() < 0.5, "mean on solutions {on_solutions}");
        let rho = spearman(&truth, &pred);
        assert!(rho >= 0.9, "spearman {rho}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = LearnedValue::<f64>::new(ValueNetConfig { order: 2, hidden: 6 }, &mut rng).unwrap();
        let p = Tensor::from_fn(&[16, 4], |_| rng.gen_range(0.0..1.0));
        let e = max_gradient_error(&[p], |g, v| net.build(g, v[0]).unwrap());
        assert!(e <= 1e-4, "{e}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = LearnedValue::<f32>::new(ValueNetConfig::new(3), &mut rng).unwrap();
        let ckpt = Checkpoint::<f32>::from_bytes(&net.to_checkpoint().to_bytes()).unwrap();
        let back = LearnedValue::from_checkpoint(&ckpt).unwrap();
        let b = random_solution(3, &mut rng).unwrap();
        assert_eq!(net.score(&b).unwrap(), back.score(&b).unwrap());
        let mut wrong = ckpt.clone();
        wrong.model_kind = "denoiser-v1".into();
        assert!(LearnedValue::from_checkpoint(&wrong).is_err());
    }

    #[test]
    fn corruption_touches_exactly_k_cells_at_most() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = random_solution(3, &mut rng).unwrap();
        for k in [0, 1, 5, 81, 100] {
            let c = corrupt_board(&s, k, &mut rng);
            let changed = s.cells().iter().zip(c.cells()).filter(|(a, b)| a != b).count();
            assert!(changed <= k.min(81));
        }
    }
}
