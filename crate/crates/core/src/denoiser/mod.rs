//! The learned denoiser `p̃(x̃₀ | x_t)`: a small pre-norm transformer over the
//! board's tokens with learned position, row, column, block and timestep
//! embeddings, plus its masked-token training loop.

mod train;

pub use train::{
    continue_training, masked_accuracy, mlm_loss, train_denoiser, LrSchedule, TrainConfig,
    TrainMetrics,
};

use crate::diffusion::{Denoiser, DiffusionError, LogitGrid, TokenSeq, MASK};
use crate::grad::{
    config_field, parse_config_snapshot, AttentionShape, Checkpoint, CheckpointError, GradError,
    Graph, ParamStore, Tensor, Var,
};
use crate::scalar::Scalar;
use crate::sudoku::GroupTable;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

pub const DENOISER_KIND: &str = "denoiser-v1";

#[derive(Debug, Error)]
pub enum DenoiserError {
    #[error("invalid denoiser config: {0}")]
    BadConfig(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("board order {found} does not match model order {expected}")]
    OrderMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub order: usize,
    pub embed: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Largest timestep the model is conditioned on.
    pub max_t: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl DenoiserConfig {
    /// Default sizes: embed 64 for 4×4, embed 128 otherwise; 4 layers and T = 64 for both.
    pub fn for_order(order: usize) -> Self {
        if order <= 2 {
            Self {
                order,
                embed: 64,
                layers: 4,
                heads: 4,
                ffn: 256,
                max_t: 64,
                dropout: 0.0,
                seed: 0,
            }
        } else {
            Self {
                order,
                embed: 128,
                layers: 4,
                heads: 4,
                ffn: 512,
                max_t: 64,
                dropout: 0.0,
                seed: 0,
            }
        }
    }

    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: String| Err(DenoiserError::BadConfig(m));
        if !(2..=3).contains(&self.order) {
            return bad(format!("order {} unsupported", self.order));
        }
        if self.embed == 0 || self.heads == 0 || self.embed % self.heads != 0 {
            return bad(format!("embed {} not divisible by heads {}", self.embed, self.heads));
        }
        if self.ffn == 0 || self.max_t == 0 {
            return bad("ffn and max_t must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.order * self.order
    }

    pub fn seq_len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn to_snapshot(&self) -> String {
        format!(
            "order={}\nembed={}\nlayers={}\nheads={}\nffn={}\nmax_t={}\ndropout={}\nseed={}\n",
            self.order, self.embed, self.layers, self.heads, self.ffn, self.max_t, self.dropout, self.seed
        )
    }

    pub fn from_snapshot(text: &str) -> Result<Self, DenoiserError> {
        let m = parse_config_snapshot(text)?;
        Ok(Self {
            order: config_field(&m, "order")?,
            embed: config_field(&m, "embed")?,
            layers: config_field(&m, "layers")?,
            heads: config_field(&m, "heads")?,
            ffn: config_field(&m, "ffn")?,
            max_t: config_field(&m, "max_t")?,
            dropout: config_field(&m, "dropout")?,
            seed: config_field(&m, "seed")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TransformerDenoiser<T: Scalar> {
    config: DenoiserConfig,
    params: ParamStore<T>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<usize>,
}

fn layer_names(l: usize) -> [String; 12] {
    [
        "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g", "ln2_b",
    ]
    .map(|n| format!("layer{l}.{n}"))
}

impl<T: Scalar> TransformerDenoiser<T> {
    /// Fresh weights drawn from the config's seed.
    pub fn new(config: DenoiserConfig) -> Result<Self, DenoiserError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, f, n) = (config.embed, config.ffn, config.side());
        let l = config.seq_len();
        let mut p = ParamStore::new();
        let emb = 0.02;
        p.insert_normal("tok_emb", &[n + 1, d], emb, &mut rng)?;
        p.insert_normal("pos_emb", &[l, d], emb, &mut rng)?;
        p.insert_normal("row_emb", &[n, d], emb, &mut rng)?;
        p.insert_normal("col_emb", &[n, d], emb, &mut rng)?;
        p.insert_normal("block_emb", &[n, d], emb, &mut rng)?;
        p.insert_normal("time_emb", &[config.max_t + 1, d], emb, &mut rng)?;
        let sd = (1.0 / d as f64).sqrt();
        for layer in 0..config.layers {
            let [ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b] = layer_names(layer);
            p.insert_full(&ln1g, &[d], 1.0)?;
            p.insert_full(&ln1b, &[d], 0.0)?;
            for (w, b) in [(&wq, &bq), (&wk, &bk), (&wv, &bv), (&wo, &bo)] {
                p.insert_normal(w, &[d, d], sd, &mut rng)?;
                p.insert_full(b, &[d], 0.0)?;
            }
            p.insert_full(&ln2g, &[d], 1.0)?;
            p.insert_full(&ln2b, &[d], 0.0)?;
            p.insert_normal(&format!("layer{layer}.ff1_w"), &[d, f], sd, &mut rng)?;
            p.insert_full(&format!("layer{layer}.ff1_b"), &[f], 0.0)?;
            p.insert_normal(&format!("layer{layer}.ff2_w"), &[f, d], (1.0 / f as f64).sqrt(), &mut rng)?;
            p.insert_full(&format!("layer{layer}.ff2_b"), &[d], 0.0)?;
        }
        p.insert_full("lnf_g", &[d], 1.0)?;
        p.insert_full("lnf_b", &[d], 0.0)?;
        p.insert_normal("head_w", &[d, n], sd, &mut rng)?;
        p.insert_full("head_b", &[n], 0.0)?;
        Ok(Self::with_params(config, p))
    }

    fn with_params(config: DenoiserConfig, params: ParamStore<T>) -> Self {
        let table = GroupTable::new(config.order);
        let l = config.seq_len();
        Self {
            rows: (0..l).map(|i| table.row_of(i)).collect(),
            cols: (0..l).map(|i| table.col_of(i)).collect(),
            blocks: (0..l).map(|i| table.block_of(i)).collect(),
            config,
            params,
        }
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint::from_store(DENOISER_KIND, &self.config.to_snapshot(), &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<T>) -> Result<Self, DenoiserError> {
        ckpt.expect_kind(DENOISER_KIND)?;
        let config = DenoiserConfig::from_snapshot(&ckpt.config)?;
        let fresh = Self::new(config.clone())?;
        let params = ckpt.to_store()?;
        let mismatch = fresh.params.len() != params.len()
            || fresh
                .params
                .iter()
                .any(|(name, t)| params.get(name).map(Tensor::shape) != Some(t.shape()));
        if mismatch {
            return Err(DenoiserError::BadConfig(
                "checkpoint arrays do not match its config".into(),
            ));
        }
        Ok(Self::with_params(config, params))
    }

    fn check_input(&self, x: &TokenSeq, t: usize) -> Result<(), DenoiserError> {
        let expected = self.config.seq_len();
        if x.len() != expected || x.num_classes() != self.config.side() {
            return Err(DenoiserError::Diffusion(DiffusionError::OrderMismatch {
                expected,
                found: x.len(),
            }));
        }
        if t > self.config.max_t {
            return Err(DenoiserError::Diffusion(DiffusionError::TimeOutOfRange {
                t,
                max: self.config.max_t,
            }));
        }
        Ok(())
    }

    /// Logits `[B·L, N]` for a batch of sequences at per-sequence timesteps.
    /// `dropout` supplies the rng used for dropout masks during training.
    pub(crate) fn forward(
        &self,
        g: &mut Graph<T>,
        xs: &[TokenSeq],
        ts: &[usize],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, DenoiserError> {
        assert_eq!(xs.len(), ts.len(), "one timestep per sequence");
        for (x, &t) in xs.iter().zip(ts) {
            self.check_input(x, t)?;
        }
        let cfg = &self.config;
        let (n, l, batch) = (cfg.side(), cfg.seq_len(), xs.len());
        let p = &self.params;
        let tok: Vec<usize> = xs
            .iter()
            .flat_map(|x| x.tokens().iter().map(|&v| if v == MASK { n } else { v as usize }))
            .collect();
        let tiled = |idx: &[usize]| -> Vec<usize> { (0..batch).flat_map(|_| idx.iter().copied()).collect() };
        let pos: Vec<usize> = tiled(&(0..l).collect::<Vec<_>>());
        let time: Vec<usize> = ts.iter().flat_map(|&t| std::iter::repeat(t).take(l)).collect();

        let mut h = {
            let e = g.param(p, "tok_emb")?;
            g.embedding(e, &tok)
        };
        for (name, idx) in [
            ("pos_emb", pos),
            ("row_emb", tiled(&self.rows)),
            ("col_emb", tiled(&self.cols)),
            ("block_emb", tiled(&self.blocks)),
            ("time_emb", time),
        ] {
            let e = g.param(p, name)?;
            let v = g.embedding(e, &idx);
            h = g.add(h, v);
        }
        let shape = AttentionShape {
            batch,
            seq: l,
            heads: cfg.heads,
        };
        for layer in 0..cfg.layers {
            let [ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b] = layer_names(layer);
            let mut param = |name: &str| g.param(p, name);
            let (ln1g, ln1b, ln2g, ln2b) = (param(&ln1g)?, param(&ln1b)?, param(&ln2g)?, param(&ln2b)?);
            let (wq, bq, wk, bk) = (param(&wq)?, param(&bq)?, param(&wk)?, param(&bk)?);
            let (wv, bv, wo, bo) = (param(&wv)?, param(&bv)?, param(&wo)?, param(&bo)?);
            let ff1w = param(&format!("layer{layer}.ff1_w"))?;
            let ff1b = param(&format!("layer{layer}.ff1_b"))?;
            let ff2w = param(&format!("layer{layer}.ff2_w"))?;
            let ff2b = param(&format!("layer{layer}.ff2_b"))?;

            let a = g.layer_norm(h, ln1g, ln1b);
            let q = g.linear(a, wq, bq);
            let k = g.linear(a, wk, bk);
            let v = g.linear(a, wv, bv);
            let att = g.attention(q, k, v, shape);
            let o = g.linear(att, wo, bo);
            let o = apply_dropout(g, o, cfg.dropout, dropout.as_deref_mut());
            h = g.add(h, o);

            let f = g.layer_norm(h, ln2g, ln2b);
            let f = g.linear(f, ff1w, ff1b);
            let f = g.relu(f);
            let f = g.linear(f, ff2w, ff2b);
            let f = apply_dropout(g, f, cfg.dropout, dropout.as_deref_mut());
            h = g.add(h, f);
        }
        let lg = g.param(p, "lnf_g")?;
        let lb = g.param(p, "lnf_b")?;
        let hw = g.param(p, "head_w")?;
        let hb = g.param(p, "head_b")?;
        let h = g.layer_norm(h, lg, lb);
        Ok(g.linear(h, hw, hb))
    }
}

fn apply_dropout<T: Scalar>(g: &mut Graph<T>, x: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = T::lit(1.0 / (1.0 - rate));
            let shape = g.value(x).shape().to_vec();
            let mask = Tensor::from_fn(&shape, |_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            });
            let m = g.input(mask);
            g.mul(x, m)
        }
        _ => x,
    }
}

impl<T: Scalar> Denoiser<T> for TransformerDenoiser<T> {
    fn seq_len(&self) -> usize {
        self.config.seq_len()
    }

    fn num_classes(&self) -> usize {
        self.config.side()
    }

    fn denoise(&self, x: &TokenSeq, t: usize) -> Result<LogitGrid<T>, DiffusionError> {
        let mut g = Graph::new();
        let out = self
            .forward(&mut g, std::slice::from_ref(x), &[t], None)
            .map_err(|e| match e {
                DenoiserError::Diffusion(d) => d,
                other => DiffusionError::Denoiser(other.to_string()),
            })?;
        let logits = g.value(out).clone();
        LogitGrid::from_tensor(logits)
    }
}
