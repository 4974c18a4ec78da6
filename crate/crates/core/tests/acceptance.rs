//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. `ACCEPTANCE_ONLY=6,7` restricts the run to the listed criteria.

use anyhow::{ensure, Context, Result};
use ddcsp::denoiser::{train_denoiser, DenoiserConfig, LrSchedule, TrainConfig, TransformerDenoiser};
use ddcsp::diffusion::toy::{all_sequences, EnumerableDist};
use ddcsp::diffusion::{reverse_step_probs, MlmSampler, Schedule, TokenSeq, MASK};
use ddcsp::grad::check::max_gradient_error;
use ddcsp::grad::{AttentionShape, CeTarget, Graph, Tensor, Var};
use ddcsp::guidance::{
    build_gumbel_softmax, AnalyticValue, Guidance, GuidanceConfig, LearnedValue,
    ValueFunction, ValueNetConfig, ValueSource,
};
use ddcsp::harness::{run_eval, MlmSolver, SolveReport};
use ddcsp::sedd::{
    sedd_output_law, sedd_sample_tokens, DenoiserRatios, ExactRatioOracle, JumpMode, RateSchedule,
    SeddConfig,
};
use ddcsp::sudoku::{count_violations, enumerate_solutions, generate_puzzle, random_solution, Board};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn main() {
    let only: Option<HashSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    type Check = fn() -> Result<Verdict>;
    let criteria: [(usize, &str, Check); 9] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "forward/posterior exactness", posterior_exactness),
        (3, "gradient fidelity", gradient_fidelity),
        (4, "sampler exactness", sampler_exactness),
        (5, "continuous-time consistency", sedd_consistency),
        (6, "desk-scale learning", desk_scale_learning),
        (7, "guidance direction", guidance_direction),
        (8, "infilling guarantee", infilling_guarantee),
        (9, "determinism", determinism),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let v = check().unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!("error: {e:#}"),
        });
        failed += !v.pass as usize;
        println!(
            "criterion {n} ({name}): {} [{:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

/// Violated groups counted from scratch: rows, columns, then boxes by index
/// arithmetic, each checked by sorting its digits.
fn recount(cells: &[u8]) -> usize {
    let mut groups: Vec<Vec<u8>> = Vec::with_capacity(27);
    for r in 0..9 {
        groups.push((0..9).map(|c| cells[r * 9 + c]).collect());
    }
    for c in 0..9 {
        groups.push((0..9).map(|r| cells[r * 9 + c]).collect());
    }
    for b in 0..9 {
        let (r0, c0) = (3 * (b / 3), 3 * (b % 3));
        groups.push((0..9).map(|k| cells[(r0 + k / 3) * 9 + c0 + k % 3]).collect());
    }
    groups
        .into_iter()
        .filter(|g| {
            let mut d: Vec<u8> = g.iter().copied().filter(|&x| x != 0).collect();
            d.sort_unstable();
            d.windows(2).any(|w| w[0] == w[1])
        })
        .count()
}

fn oracle_equivalence() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for n in 0..1000 {
        let cells: Vec<u8> = if n % 4 == 0 {
            // near-solutions exercise the low-violation end
            let mut b = random_solution(3, &mut rng)?;
            for _ in 0..rng.gen_range(0..4) {
                b.set(rng.gen_range(0..81), rng.gen_range(0..=9));
            }
            b.cells().to_vec()
        } else {
            (0..81).map(|_| rng.gen_range(0..=9)).collect()
        };
        let board = Board::from_cells(3, cells.clone())?;
        mismatches += (count_violations(&board) != recount(&cells)) as usize;
    }
    let start = Instant::now();
    let sols = enumerate_solutions(&Board::empty(2)?, usize::MAX);
    let elapsed = start.elapsed();
    let distinct: HashSet<&Board> = sols.iter().collect();
    let all_valid = sols.iter().all(|b| b.is_complete() && recount_4(b.cells()) == 0);
    verdict(
        mismatches == 0 && sols.len() == 288 && distinct.len() == 288 && all_valid && elapsed < Duration::from_secs(5),
        format!(
            "{mismatches} mismatches on 1000 boards; {} solutions ({} distinct, valid={all_valid}) in {:.3}s",
            sols.len(),
            distinct.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn recount_4(cells: &[u8]) -> usize {
    let idx = |r: usize, c: usize| cells[r * 4 + c];
    let mut groups: Vec<Vec<u8>> = Vec::new();
    for i in 0..4 {
        groups.push((0..4).map(|j| idx(i, j)).collect());
        groups.push((0..4).map(|j| idx(j, i)).collect());
        let (r0, c0) = (2 * (i / 2), 2 * (i % 2));
        groups.push((0..4).map(|k| idx(r0 + k / 2, c0 + k % 2)).collect());
    }
    groups
        .iter()
        .filter(|g| g.iter().collect::<HashSet<_>>().len() < 4)
        .count()
}

// ---------------------------------------------------------------- 2

type Matrix = Vec<Vec<f64>>;

/// One-step absorbing kernel over `K` digits plus the mask state `K`.
fn q_step(k: usize, beta: f64) -> Matrix {
    let mut q = vec![vec![0.0; k + 1]; k + 1];
    for (i, row) in q.iter_mut().enumerate() {
        if i == k {
            row[k] = 1.0;
        } else {
            row[i] = 1.0 - beta;
            row[k] = beta;
        }
    }
    q
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

/// Product of one-step kernels for steps `from+1 ..= to`.
fn q_bar(betas: &[f64], k: usize, from: usize, to: usize) -> Matrix {
    let mut acc: Matrix = (0..=k).map(|i| (0..=k).map(|j| (i == j) as u8 as f64).collect()).collect();
    for &b in &betas[from..to] {
        acc = matmul(&acc, &q_step(k, b));
    }
    acc
}

/// `Σ_{x0} p̃(x0) q(x_{t−k} | x_t, x0)` by Bayes on explicit matrices, over
/// the `x0` compatible with `x_t`.
fn brute_reverse(betas: &[f64], dist: &[f64], xt: usize, t: usize, k: usize) -> Option<Vec<f64>> {
    let classes = dist.len();
    let to_prev = q_bar(betas, classes, 0, t - k);
    let prev_to_now = q_bar(betas, classes, t - k, t);
    let to_now = q_bar(betas, classes, 0, t);
    let mut out = vec![0.0; classes + 1];
    let mut mass = 0.0;
    for (x0, &w) in dist.iter().enumerate() {
        let z = to_now[x0][xt];
        if z <= 0.0 || w <= 0.0 {
            continue;
        }
        mass += w;
        for (y, o) in out.iter_mut().enumerate() {
            *o += w * to_prev[x0][y] * prev_to_now[y][xt] / z;
        }
    }
    (mass > 0.0).then(|| out.iter().map(|o| o / mass).collect())
}

fn posterior_exactness() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut cases) = (0.0f64, 0usize);
    for big_t in 1..=8 {
        let schedule = Schedule::<f64>::linear(big_t)?;
        let betas = schedule.betas().to_vec();
        for classes in [3usize, 4] {
            let mut dist: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|p| *p /= s);
            for t in 1..=big_t {
                for k in 1..=t {
                    for xt in 0..=classes {
                        let token = if xt == classes { MASK } else { xt as u8 };
                        let Some(want) = brute_reverse(&betas, &dist, xt, t, k) else {
                            continue;
                        };
                        let got = reverse_step_probs(token, &dist, t, k, &schedule)?;
                        for (a, b) in got.iter().zip(&want) {
                            worst = worst.max((a - b).abs());
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("max error {worst:.2e} over {cases} (T, t, k, x_t) cases in {:.3}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 3

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Fixed random weights turning any output into a scalar.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, g.value(y).shape());
    let w = g.input(w);
    let p = g.mul(y, w);
    g.sum(p)
}

fn gradient_fidelity() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[4, 3]);
    let b = rand_tensor(&mut rng, &[4, 3]);
    let pos = Tensor::from_fn(&[4, 3], |_| rng.gen_range(0.5..2.0));
    let bias = rand_tensor(&mut rng, &[3]);
    let gamma = rand_tensor(&mut rng, &[3]);
    let w = rand_tensor(&mut rng, &[3, 5]);
    let wb = rand_tensor(&mut rng, &[5]);
    let table = rand_tensor(&mut rng, &[6, 3]);
    let logits = rand_tensor(&mut rng, &[4, 5]);
    let other = rand_tensor(&mut rng, &[4, 5]);
    let groups = Arc::new(vec![vec![0, 1], vec![3], vec![1, 2, 3]]);
    let targets = vec![
        CeTarget { row: 0, class: 2, weight: 0.5 },
        CeTarget { row: 2, class: 4, weight: 0.25 },
        CeTarget { row: 3, class: 0, weight: 0.25 },
    ];

    type F<'a> = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var + 'a>;
    let proj = |f: fn(&mut Graph<f64>, &[Var]) -> Var| -> F { Box::new(move |g, v| { let y = f(g, v); project(g, y, 9) }) };
    let primitives: Vec<(&str, Vec<Tensor<f64>>, F)> = vec![
        ("add", vec![a.clone(), b.clone()], proj(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![a.clone(), b.clone()], proj(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![a.clone(), b.clone()], proj(|g, v| g.mul(v[0], v[1]))),
        ("scale", vec![a.clone()], proj(|g, v| g.scale(v[0], -1.7))),
        ("add_scalar", vec![a.clone()], proj(|g, v| g.add_scalar(v[0], 0.4))),
        ("add_row", vec![a.clone(), bias.clone()], proj(|g, v| g.add_row(v[0], v[1]))),
        ("relu", vec![a.clone()], proj(|g, v| g.relu(v[0]))),
        ("exp", vec![a.clone()], proj(|g, v| g.exp(v[0]))),
        ("log", vec![pos.clone()], proj(|g, v| g.log(v[0]))),
        ("square", vec![a.clone()], proj(|g, v| g.square(v[0]))),
        ("sum", vec![a.clone()], Box::new(|g: &mut Graph<f64>, v: &[Var]| g.sum(v[0]))),
        ("mean", vec![a.clone()], Box::new(|g: &mut Graph<f64>, v: &[Var]| g.mean(v[0]))),
        ("matmul", vec![a.clone(), w.clone()], proj(|g, v| g.matmul(v[0], v[1]))),
        ("linear", vec![a.clone(), w.clone(), wb.clone()], proj(|g, v| g.linear(v[0], v[1], v[2]))),
        ("embedding", vec![table.clone()], proj(|g, v| g.embedding(v[0], &[5, 0, 5, 2]))),
        (
            "gather_sum",
            vec![a.clone()],
            Box::new(|g: &mut Graph<f64>, v: &[Var]| {
                let y = g.gather_sum(v[0], groups.clone());
                project(g, y, 9)
            }),
        ),
        ("layer_norm", vec![a.clone(), gamma.clone(), bias.clone()], proj(|g, v| g.layer_norm(v[0], v[1], v[2]))),
        ("softmax", vec![logits.clone()], proj(|g, v| g.softmax(v[0]))),
        ("log_softmax", vec![logits.clone()], proj(|g, v| g.log_softmax(v[0]))),
        (
            "cross_entropy",
            vec![logits.clone()],
            Box::new(|g: &mut Graph<f64>, v: &[Var]| g.cross_entropy(v[0], targets.clone())),
        ),
        ("kl_softmax", vec![logits.clone(), other.clone()], Box::new(|g: &mut Graph<f64>, v: &[Var]| g.kl_softmax(v[0], v[1]))),
    ];
    let mut report = Vec::new();
    let mut pass = true;
    let mut worst_prim = 0.0f64;
    for (name, inputs, f) in &primitives {
        let e = max_gradient_error(inputs, f);
        worst_prim = worst_prim.max(e);
        if e > 1e-6 {
            pass = false;
            report.push(format!("{name}={e:.1e}"));
        }
    }

    // straight-through: forward one-hot, backward identity
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(&[2, 3], vec![0.1, 0.7, 0.2, 0.5, 0.2, 0.3])?);
    let y = g.straight_through(x);
    let s = project(&mut g, y, 10);
    g.backward(s)?;
    let wst = rand_tensor(&mut ChaCha8Rng::seed_from_u64(10), &[2, 3]);
    let st_ok = g.value(y).data() == [0.0, 1.0, 0.0, 1.0, 0.0, 0.0] && g.grad(x) == Some(wst.data());
    pass &= st_ok;

    // analytic value on a random relaxed 4×4 board
    let value = AnalyticValue::for_order(2);
    let p = Tensor::from_fn(&[16, 4], |_| rng.gen_range(0.0..1.0));
    let e_value = max_gradient_error(&[p.clone()], |g, v| value.build(g, v[0]).expect("valid board"));
    pass &= e_value <= 1e-6;

    // composites
    let mut worst_comp = 0.0f64;
    let q = rand_tensor(&mut rng, &[6, 4]);
    let k = rand_tensor(&mut rng, &[6, 4]);
    let v = rand_tensor(&mut rng, &[6, 4]);
    let shape = AttentionShape { batch: 2, seq: 3, heads: 2 };
    worst_comp = worst_comp.max(max_gradient_error(&[q, k, v], |g, x| {
        let y = g.attention(x[0], x[1], x[2], shape);
        project(g, y, 11)
    }));
    let noise = rand_tensor(&mut rng, &[16, 4]);
    let h = rand_tensor(&mut rng, &[16, 4]);
    worst_comp = worst_comp.max(max_gradient_error(&[h.clone()], |g, x| {
        let relaxed = build_gumbel_softmax(g, x[0], &noise, 0.5, false).expect("gumbel");
        value.build(g, relaxed).expect("value")
    }));
    let net = LearnedValue::<f64>::new(ValueNetConfig::new(2), &mut rng)?;
    worst_comp = worst_comp.max(max_gradient_error(&[p], |g, x| net.build(g, x[0]).expect("net")));
    pass &= worst_comp <= 1e-4;

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    verdict(
        pass,
        format!(
            "{} primitives max rel err {worst_prim:.1e}{}; straight-through {}; analytic value {e_value:.1e}; composites {worst_comp:.1e}",
            primitives.len(),
            if report.is_empty() { String::new() } else { format!(" (over: {})", report.join(", ")) },
            if st_ok { "exact" } else { "wrong" },
        ),
    )
}

// ---------------------------------------------------------------- 4 and 5

/// Two tokens over three digits.
fn toy() -> Result<EnumerableDist> {
    Ok(EnumerableDist::new(
        3,
        vec![
            (vec![0, 1], 0.4),
            (vec![1, 0], 0.25),
            (vec![2, 2], 0.2),
            (vec![0, 0], 0.15),
        ],
    )?)
}

fn tv(a: &BTreeMap<Vec<u8>, f64>, b: &BTreeMap<Vec<u8>, f64>) -> f64 {
    let keys: HashSet<&Vec<u8>> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

fn truth(d: &EnumerableDist) -> BTreeMap<Vec<u8>, f64> {
    all_sequences(3, 2, false).into_iter().map(|x| { let p = d.prob(&x); (x, p) }).collect()
}

fn empirical(samples: &[Vec<u8>]) -> BTreeMap<Vec<u8>, f64> {
    let mut m = BTreeMap::new();
    for s in samples {
        *m.entry(s.clone()).or_insert(0.0) += 1.0 / samples.len() as f64;
    }
    m
}

fn sampler_exactness() -> Result<Verdict> {
    let start = Instant::now();
    let d = toy()?;
    let posterior = d.posterior_denoiser();
    // many steps keep simultaneous unmasking of both tokens rare
    let schedule = Schedule::<f64>::linear(100)?;
    let sampler = MlmSampler::new(&schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = (0..10_000)
        .map(|_| Ok(sampler.sample(&posterior, None, &mut rng)?.tokens().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let dist = tv(&empirical(&samples), &truth(&d));
    let elapsed = start.elapsed();
    verdict(
        dist <= 0.05 && elapsed < Duration::from_secs(30),
        format!("TV {dist:.4} at 10^4 samples, T = 100"),
    )
}

fn exact_law(oracle: &ExactRatioOracle, dt: f64, mode: JumpMode) -> Result<BTreeMap<Vec<u8>, f64>> {
    let cfg = SeddConfig { dt, mode, ..SeddConfig::default() };
    Ok(sedd_output_law(oracle, &RateSchedule::default(), &cfg, None)?
        .into_iter()
        .map(|(x, p)| (x.tokens().to_vec(), p))
        .collect())
}

fn sedd_consistency() -> Result<Verdict> {
    let start = Instant::now();
    let d = toy()?;
    let target = truth(&d);
    let oracle = ExactRatioOracle::new(&d, RateSchedule::default());
    let draw = |mode: JumpMode, seed: u64| -> Result<BTreeMap<Vec<u8>, f64>> {
        let cfg = SeddConfig { dt: 1e-3, mode, ..SeddConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..10_000)
            .map(|_| {
                let (x, _) = sedd_sample_tokens(&oracle, &RateSchedule::default(), &cfg, None, &mut rng, &mut |_, _| {})?;
                Ok(x.tokens().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(empirical(&samples))
    };
    let single = draw(JumpMode::SingleJump, 51)?;
    let tau = draw(JumpMode::TauLeap, 52)?;
    let tv_a = tv(&single, &target);
    let tv_b = tv(&single, &tau);
    let law_a = tv(&exact_law(&oracle, 1e-3, JumpMode::SingleJump)?, &target);
    let law_b = tv(
        &exact_law(&oracle, 1e-3, JumpMode::SingleJump)?,
        &exact_law(&oracle, 1e-3, JumpMode::TauLeap)?,
    );
    let gaps = [4e-2, 2e-2, 1e-2]
        .iter()
        .map(|&dt| Ok(tv(&exact_law(&oracle, dt, JumpMode::SingleJump)?, &target)))
        .collect::<Result<Vec<f64>>>()?;
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed();
    verdict(
        tv_a <= 0.05 && tv_b <= 0.05 && law_a <= 0.05 && law_b <= 0.05 && monotone && elapsed < Duration::from_secs(120),
        format!(
            "(a) sampled TV {tv_a:.4}, exact-law TV {law_a:.1e}; (b) tau-leap vs single-jump sampled {tv_b:.4}, exact {law_b:.1e}; \
             (c) gaps {:.4} > {:.4} > {:.4}",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

// ---------------------------------------------------------------- 6 and 7

/// 200 distinct 4×4 training solutions and 500 unique 6-given puzzles drawn
/// from independent streams.
fn desk_data(seed: u64) -> Result<(Vec<Board>, Vec<(Board, Board)>)> {
    let mut all = enumerate_solutions(&Board::empty(2)?, usize::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(200);
    let mut prng = ChaCha8Rng::seed_from_u64(seed);
    prng.set_stream(1);
    let puzzles = (0..500)
        .map(|_| Ok(generate_puzzle(&mut prng, 2, 6, true)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((all, puzzles))
}

fn desk_denoiser_config() -> DenoiserConfig {
    DenoiserConfig::for_order(2)
}

fn train(solutions: &[Board], steps: usize, lr: f64) -> Result<TransformerDenoiser<f32>> {
    let dcfg = desk_denoiser_config();
    let tcfg = TrainConfig {
        steps,
        lr: LrSchedule::WarmupCosine { peak: lr, warmup: 200.min(steps / 4), floor: 0.1 },
        eval_every: 0,
        ..TrainConfig::default()
    };
    let schedule = Schedule::<f32>::linear(dcfg.max_t)?;
    let (model, _) = train_denoiser(solutions, &[], &dcfg, &tcfg, &schedule, &mut |_| {})?;
    Ok(model)
}

fn evaluate(
    model: &TransformerDenoiser<f32>,
    puzzles: &[(Board, Board)],
    guidance: Option<Guidance<'_, f32>>,
    seed: u64,
) -> Result<SolveReport> {
    let schedule = Schedule::<f32>::linear(model.config().max_t)?;
    let solver = MlmSolver { denoiser: model, schedule: &schedule, guidance, stride: 1 };
    Ok(run_eval(&solver, puzzles, 1, seed, "DDCSP", "desk", BTreeMap::new(), false)?)
}

const DESK_STEPS: usize = 24000;
const DESK_LR: f64 = 1e-3;

fn desk_scale_learning() -> Result<Verdict> {
    let start = Instant::now();
    let (train_set, puzzles) = desk_data(6)?;
    let model = train(&train_set, DESK_STEPS, DESK_LR)?;
    let trained = start.elapsed();
    let report = evaluate(&model, &puzzles, None, 0)?;
    let elapsed = start.elapsed();
    verdict(
        report.solve_rate >= 0.9 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "solve rate {:.1}% ({}/{}) best-of-1 after {DESK_STEPS} steps; train {:.0}s, total {:.0}s",
            report.solve_rate * 100.0,
            report.solved,
            report.total,
            trained.as_secs_f64(),
            elapsed.as_secs_f64()
        ),
    )
}

const UNDER_TRAINED_STEPS: usize = 800;
const UNDER_TRAINED_LR: f64 = 1e-3;

fn guidance_direction() -> Result<Verdict> {
    let start = Instant::now();
    let (train_set, puzzles) = desk_data(7)?;
    let model = train(&train_set, UNDER_TRAINED_STEPS, UNDER_TRAINED_LR)?;
    let gcfg = GuidanceConfig { value: ValueSource::Analytic, ..GuidanceConfig::default() };
    let value = AnalyticValue::for_order(2);
    let (mut plain, mut guided) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        plain.push(evaluate(&model, &puzzles, None, seed)?.solve_rate);
        let g = Guidance { config: &gcfg, value: &value };
        guided.push(evaluate(&model, &puzzles, Some(g), seed)?.solve_rate);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (u, gd) = (mean(&plain), mean(&guided));
    let elapsed = start.elapsed();
    verdict(
        (0.4..=0.8).contains(&u) && gd >= u + 0.03 && elapsed < Duration::from_secs(20 * 60),
        format!(
            "checkpoint after {UNDER_TRAINED_STEPS} steps: unguided {:.1}%, guided {:.1}% (+{:.1} points) over 5 seeds × 500 puzzles",
            u * 100.0,
            gd * 100.0,
            (gd - u) * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 8

fn infilling_guarantee() -> Result<Verdict> {
    let mut cfg = DenoiserConfig::for_order(2);
    cfg.seed = 8;
    let model = TransformerDenoiser::<f32>::new(cfg)?;
    let schedule = Schedule::<f32>::linear(model.config().max_t)?;
    let gcfg = GuidanceConfig { value: ValueSource::Analytic, ..GuidanceConfig::default() };
    let value = AnalyticValue::for_order(2);
    let ratios = DenoiserRatios::<f32, _>::new(&model, RateSchedule::default(), model.config().max_t);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut states, mut bad, mut incomplete) = (0usize, 0usize, 0usize);
    for n in 0..1000 {
        let givens_count = [4, 6, 8, 10][n % 4];
        let (puzzle, _) = generate_puzzle(&mut rng, 2, givens_count, false)?;
        let givens = TokenSeq::from_board(&puzzle);
        let mut check = |x: &TokenSeq| {
            states += 1;
            let ok = givens.tokens().iter().zip(x.tokens()).all(|(&g, &v)| g == MASK || g == v);
            bad += !ok as usize;
        };
        let mut sampler = MlmSampler::new(&schedule);
        if n % 2 == 1 {
            sampler = sampler.with_guidance(Guidance { config: &gcfg, value: &value });
        }
        let out = sampler.sample_traced(&model, Some(&givens), &mut rng, &mut |_, x| check(x))?;
        incomplete += !out.is_complete() as usize;
        let mode = if n % 2 == 0 { JumpMode::SingleJump } else { JumpMode::TauLeap };
        let scfg = SeddConfig { dt: 2e-2, mode, ..SeddConfig::default() };
        let (out, _) = sedd_sample_tokens(&ratios, &RateSchedule::default(), &scfg, Some(&givens), &mut rng, &mut |_, x| check(x))?;
        incomplete += !out.is_complete() as usize;
    }
    verdict(
        bad == 0 && incomplete == 0,
        format!(
            "1000 trajectories per sampler, {states} states checked, {bad} disagree with givens, {incomplete} incomplete outputs"
        ),
    )
}

// ---------------------------------------------------------------- 9

fn run_cli(dir: &Path, args: &[&str]) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_ddcsp"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .output()
        .context("launching ddcsp")?;
    ensure!(
        out.status.success(),
        "ddcsp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let steps = [
        vec!["--seed", "9", "gen-data", "--count", "64", "--out", "train.txt"],
        vec!["--seed", "10", "gen-data", "--count", "40", "--givens", "6", "--out", "eval.txt"],
        vec!["--seed", "9", "--set", "train.eval_every=20", "train-denoiser", "--data", "train.txt", "--held-out", "train.txt", "--steps", "60"],
        vec!["--seed", "9", "train-value", "--data", "train.txt", "--steps", "100"],
        vec!["--seed", "3", "eval", "--data", "eval.txt", "--ckpt", "denoiser.ckpt", "--out", "plain.csv"],
        vec![
            "--seed", "3", "eval", "--data", "eval.txt", "--ckpt", "denoiser.ckpt", "--guide", "--value-ckpt", "value.ckpt",
            "--format", "json", "--out", "guided.json",
        ],
        vec!["--seed", "3", "--set", "sedd.dt=0.05", "eval", "--data", "eval.txt", "--method", "sedd", "--ckpt", "denoiser.ckpt", "--out", "sedd.csv"],
        vec!["report", "plain.csv", "sedd.csv", "--out", "merged.csv"],
    ];
    for s in &steps {
        run_cli(dir, s)?;
    }
    let mut files = Vec::new();
    for name in [
        "train.txt",
        "eval.txt",
        "denoiser.ckpt",
        "denoiser.ckpt.metrics.csv",
        "value.ckpt",
        "plain.csv",
        "guided.json",
        "sedd.csv",
        "merged.csv",
    ] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).with_context(|| name.to_string())?));
    }
    Ok(files)
}

fn determinism() -> Result<Verdict> {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two invocations", first.len())
        } else {
            format!("differing artifacts: {}", differing.join(", "))
        },
    )
}
