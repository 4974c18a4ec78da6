use super::{RateSchedule, RatioModel, SeddError};
use crate::diffusion::{clamp_tokens, sample_categorical, TokenSeq, MASK};
use crate::sudoku::Board;
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpMode {
    /// At most one position changes per step.
    SingleJump,
    /// Every masked position jumps independently.
    TauLeap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeddConfig {
    pub horizon: f64,
    /// Requested step; the grid uses `horizon / round(horizon / dt)` so it lands on zero.
    pub dt: f64,
    pub mode: JumpMode,
    pub seed: u64,
}

impl Default for SeddConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-2,
            mode: JumpMode::SingleJump,
            seed: 0,
        }
    }
}

impl SeddConfig {
    pub fn validate(&self) -> Result<(), SeddError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SeddError::BadConfig("horizon must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(SeddError::BadConfig(format!(
                "dt {} outside (0, {}]",
                self.dt, self.horizon
            )));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.num_steps() as f64
    }
}

/// Per-trajectory counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeddStats {
    pub steps: usize,
    /// Steps where jump probabilities exceeded one and the stay probability was clamped to zero.
    pub clamp_events: usize,
}

/// Outcome distribution of one reverse step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub outcomes: Vec<(TokenSeq, f64)>,
    pub clamped: bool,
}

pub fn ctmc_forward_sample<R: Rng + ?Sized>(
    x0: &Board,
    t: f64,
    schedule: &RateSchedule,
    rng: &mut R,
) -> Result<TokenSeq, SeddError> {
    if !x0.is_complete() {
        return Err(SeddError::BadConfig("forward sampling needs a complete board".into()));
    }
    Ok(ctmc_forward_sample_tokens(&TokenSeq::from_board(x0), t, schedule, rng))
}

/// Each token independently absorbed with probability `m(t)`.
pub fn ctmc_forward_sample_tokens<R: Rng + ?Sized>(
    x0: &TokenSeq,
    t: f64,
    schedule: &RateSchedule,
    rng: &mut R,
) -> TokenSeq {
    let m = schedule.mask_prob(t);
    let mut out = x0.clone();
    for i in 0..out.len() {
        if rng.gen::<f64>() < m {
            out.set(i, MASK);
        }
    }
    out
}

/// Euler jump probabilities `Δt · σ(t) · ratio(i, v)`, row-major over positions.
fn jump_probs<M: RatioModel + ?Sized>(
    x: &TokenSeq,
    t: f64,
    dt: f64,
    ratios: &M,
    schedule: &RateSchedule,
) -> Result<Vec<f64>, SeddError> {
    if !(dt >= 0.0 && dt <= t + 1e-12) {
        return Err(SeddError::BadConfig(format!("step {dt} exceeds time {t}")));
    }
    let k = ratios.num_classes();
    let mut r = ratios.ratios(x, t)?;
    let rate = dt * schedule.sigma(t);
    for (idx, v) in r.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(SeddError::NonFinite { position: idx / k });
        }
        if *v < 0.0 {
            return Err(SeddError::NegativeRatio {
                position: idx / k,
                class: idx % k,
                value: *v,
            });
        }
        *v = if x.is_masked(idx / k) { *v * rate } else { 0.0 };
    }
    Ok(r)
}

/// The single-jump transition from `x`: stay first, then every `(i, v)` in
/// index order. When the jump probabilities sum past one, stay is clamped to
/// zero and the jumps are renormalized.
pub fn single_jump_kernel<M: RatioModel + ?Sized>(
    x: &TokenSeq,
    t: f64,
    dt: f64,
    ratios: &M,
    schedule: &RateSchedule,
) -> Result<StepKernel, SeddError> {
    let k = ratios.num_classes();
    let jumps = jump_probs(x, t, dt, ratios, schedule)?;
    let total: f64 = jumps.iter().sum();
    let clamped = total > 1.0;
    let norm = if clamped { total } else { 1.0 };
    let mut outcomes = vec![(x.clone(), if clamped { 0.0 } else { 1.0 - total })];
    for (idx, &p) in jumps.iter().enumerate() {
        if p > 0.0 {
            let mut y = x.clone();
            y.set(idx / k, (idx % k) as u8);
            outcomes.push((y, p / norm));
        }
    }
    Ok(StepKernel { outcomes, clamped })
}

/// Per-position categorical over `[stay, class 0, …]` for tau-leaping, plus a clamp flag.
fn leap_rows(jumps: &[f64], k: usize, x: &TokenSeq) -> (Vec<(usize, Vec<f64>)>, bool) {
    let mut clamped = false;
    let rows = x
        .masked_set()
        .into_iter()
        .map(|i| {
            let row = &jumps[i * k..(i + 1) * k];
            let total: f64 = row.iter().sum();
            let mut probs = Vec::with_capacity(k + 1);
            if total > 1.0 {
                clamped = true;
                probs.push(0.0);
                probs.extend(row.iter().map(|p| p / total));
            } else {
                probs.push(1.0 - total);
                probs.extend_from_slice(row);
            }
            (i, probs)
        })
        .collect();
    (rows, clamped)
}

/// Exact tau-leap transition law: the product of independent per-position jumps.
pub fn tau_leap_kernel<M: RatioModel + ?Sized>(
    x: &TokenSeq,
    t: f64,
    dt: f64,
    ratios: &M,
    schedule: &RateSchedule,
) -> Result<StepKernel, SeddError> {
    let k = ratios.num_classes();
    let jumps = jump_probs(x, t, dt, ratios, schedule)?;
    let (rows, clamped) = leap_rows(&jumps, k, x);
    let mut outcomes = vec![(x.clone(), 1.0)];
    for (i, probs) in rows {
        outcomes = outcomes
            .into_iter()
            .flat_map(|(y, p)| {
                probs.iter().enumerate().filter(|(_, &q)| q > 0.0).map(move |(c, &q)| {
                    let mut z = y.clone();
                    if c > 0 {
                        z.set(i, (c - 1) as u8);
                    }
                    (z, p * q)
                })
            })
            .collect();
    }
    Ok(StepKernel { outcomes, clamped })
}

/// One single-jump Euler step; the flag reports a clamped stay probability.
pub fn euler_reverse_step<M: RatioModel + ?Sized, R: Rng + ?Sized>(
    x: &TokenSeq,
    t: f64,
    dt: f64,
    ratios: &M,
    schedule: &RateSchedule,
    rng: &mut R,
) -> Result<(TokenSeq, bool), SeddError> {
    if dt == 0.0 {
        return Ok((x.clone(), false));
    }
    let kernel = single_jump_kernel(x, t, dt, ratios, schedule)?;
    let probs: Vec<f64> = kernel.outcomes.iter().map(|(_, p)| *p).collect();
    let pick = sample_categorical(&probs, rng);
    Ok((kernel.outcomes[pick].0.clone(), kernel.clamped))
}

/// One tau-leaping step: every masked position jumps independently.
pub fn tau_leap_step<M: RatioModel + ?Sized, R: Rng + ?Sized>(
    x: &TokenSeq,
    t: f64,
    dt: f64,
    ratios: &M,
    schedule: &RateSchedule,
    rng: &mut R,
) -> Result<(TokenSeq, bool), SeddError> {
    if dt == 0.0 {
        return Ok((x.clone(), false));
    }
    let k = ratios.num_classes();
    let jumps = jump_probs(x, t, dt, ratios, schedule)?;
    let (rows, clamped) = leap_rows(&jumps, k, x);
    let mut y = x.clone();
    for (i, probs) in rows {
        let c = sample_categorical(&probs, rng);
        if c > 0 {
            y.set(i, (c - 1) as u8);
        }
    }
    Ok((y, clamped))
}

/// Fills every remaining `MASK` with its highest-ratio digit (lowest index on ties).
fn fill_residual<M: RatioModel + ?Sized>(x: &TokenSeq, t: f64, ratios: &M) -> Result<TokenSeq, SeddError> {
    let masked = x.masked_set();
    if masked.is_empty() {
        return Ok(x.clone());
    }
    let k = ratios.num_classes();
    let r = ratios.ratios(x, t)?;
    let mut y = x.clone();
    for i in masked {
        let row = &r[i * k..(i + 1) * k];
        let mut best = 0;
        for (v, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = v;
            }
        }
        y.set(i, best as u8);
    }
    Ok(y)
}

fn check_givens<M: RatioModel + ?Sized>(ratios: &M, givens: Option<&TokenSeq>) -> Result<(), SeddError> {
    if let Some(g) = givens {
        if g.len() != ratios.seq_len() || g.num_classes() != ratios.num_classes() {
            return Err(SeddError::Shape(format!(
                "givens of length {}, model length {}",
                g.len(),
                ratios.seq_len()
            )));
        }
    }
    Ok(())
}

/// Reverse CTMC sampling from `t = horizon` to zero, starting all-`MASK`.
///
/// `givens` are clamped before every step; `observe` sees `(t, state)` after
/// each clamp and once more for the final state at `t = 0`. Masks left at
/// the end are filled with their highest-ratio digit at the last step time.
pub fn sedd_sample_tokens<M: RatioModel + ?Sized, R: Rng + ?Sized>(
    ratios: &M,
    schedule: &RateSchedule,
    cfg: &SeddConfig,
    givens: Option<&TokenSeq>,
    rng: &mut R,
    observe: &mut dyn FnMut(f64, &TokenSeq),
) -> Result<(TokenSeq, SeddStats), SeddError> {
    cfg.validate()?;
    schedule.validate()?;
    check_givens(ratios, givens)?;
    let clamp = |x: &TokenSeq| givens.map_or_else(|| x.clone(), |g| clamp_tokens(x, g));
    let (n, h) = (cfg.num_steps(), cfg.step());
    let mut x = TokenSeq::all_masked(ratios.num_classes(), ratios.seq_len());
    let mut stats = SeddStats::default();
    for step in 0..n {
        let t = cfg.horizon - step as f64 * h;
        x = clamp(&x);
        observe(t, &x);
        if x.is_complete() {
            continue;
        }
        let (next, clamped) = match cfg.mode {
            JumpMode::SingleJump => euler_reverse_step(&x, t, h, ratios, schedule, rng)?,
            JumpMode::TauLeap => tau_leap_step(&x, t, h, ratios, schedule, rng)?,
        };
        x = next;
        stats.steps += 1;
        stats.clamp_events += clamped as usize;
    }
    x = fill_residual(&clamp(&x), h, ratios)?;
    observe(0.0, &x);
    Ok((x, stats))
}

/// Samples a complete board, optionally infilling `puzzle`.
pub fn sedd_sample<M: RatioModel + ?Sized, R: Rng + ?Sized>(
    ratios: &M,
    schedule: &RateSchedule,
    cfg: &SeddConfig,
    puzzle: Option<&Board>,
    rng: &mut R,
) -> Result<Board, SeddError> {
    let side = ratios.num_classes();
    let order = (side as f64).sqrt().round() as usize;
    if order * order != side || ratios.seq_len() != side * side {
        return Err(SeddError::Shape(format!("model over {side} classes is not a Sudoku model")));
    }
    if let Some(p) = puzzle {
        if p.order() != order {
            return Err(SeddError::Shape(format!("puzzle order {} vs model order {order}", p.order())));
        }
    }
    let givens = puzzle.map(TokenSeq::from_board);
    let (x, _) = sedd_sample_tokens(ratios, schedule, cfg, givens.as_ref(), rng, &mut |_, _| {})?;
    Ok(x.to_board(order)?)
}

/// Exact output law of [`sedd_sample_tokens`], by pushing the state
/// distribution through every step kernel. Feasible for tiny state spaces only.
pub fn sedd_output_law<M: RatioModel + ?Sized>(
    ratios: &M,
    schedule: &RateSchedule,
    cfg: &SeddConfig,
    givens: Option<&TokenSeq>,
) -> Result<BTreeMap<TokenSeq, f64>, SeddError> {
    cfg.validate()?;
    schedule.validate()?;
    check_givens(ratios, givens)?;
    let clamp = |x: &TokenSeq| givens.map_or_else(|| x.clone(), |g| clamp_tokens(x, g));
    let (n, h) = (cfg.num_steps(), cfg.step());
    let mut law = BTreeMap::new();
    law.insert(TokenSeq::all_masked(ratios.num_classes(), ratios.seq_len()), 1.0);
    for step in 0..n {
        let t = cfg.horizon - step as f64 * h;
        let mut next = BTreeMap::new();
        for (x, p) in law {
            let x = clamp(&x);
            if x.is_complete() {
                *next.entry(x).or_insert(0.0) += p;
                continue;
            }
            let kernel = match cfg.mode {
                JumpMode::SingleJump => single_jump_kernel(&x, t, h, ratios, schedule)?,
                JumpMode::TauLeap => tau_leap_kernel(&x, t, h, ratios, schedule)?,
            };
            for (y, q) in kernel.outcomes {
                *next.entry(y).or_insert(0.0) += p * q;
            }
        }
        law = next;
    }
    let mut out = BTreeMap::new();
    for (x, p) in law {
        let y = fill_residual(&clamp(&x), h, ratios)?;
        *out.entry(y).or_insert(0.0) += p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::toy::EnumerableDist;
    use crate::sedd::ExactRatioOracle;
    use crate::sudoku::random_solution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> EnumerableDist {
        EnumerableDist::new(
            3,
            vec![(vec![0, 1], 0.5), (vec![1, 0], 0.2), (vec![2, 2], 0.2), (vec![0, 0], 0.1)],
        )
        .unwrap()
    }

    #[test]
    fn zero_step_is_identity_and_at_most_one_change() {
        let d = toy();
        let s = RateSchedule::default();
        let o = ExactRatioOracle::new(&d, s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = TokenSeq::all_masked(3, 2);
        assert_eq!(euler_reverse_step(&x, 0.5, 0.0, &o, &s, &mut rng).unwrap().0, x);
        assert_eq!(tau_leap_step(&x, 0.5, 0.0, &o, &s, &mut rng).unwrap().0, x);
        for _ in 0..2000 {
            let (y, _) = euler_reverse_step(&x, 0.05, 0.05, &o, &s, &mut rng).unwrap();
            let changed = (0..2).filter(|&i| y.get(i) != x.get(i)).count();
            assert!(changed <= 1);
        }
    }

    #[test]
    fn kernel_rows_sum_to_one() {
        let d = toy();
        let s = RateSchedule::default();
        let o = ExactRatioOracle::new(&d, s);
        for x in [vec![MASK, MASK], vec![0, MASK], vec![MASK, 2]] {
            let x = TokenSeq::new(3, x).unwrap();
            for (t, dt) in [(0.5, 0.01), (0.02, 0.02), (0.9, 0.3)] {
                for k in [
                    single_jump_kernel(&x, t, dt, &o, &s).unwrap(),
                    tau_leap_kernel(&x, t, dt, &o, &s).unwrap(),
                ] {
                    let total: f64 = k.outcomes.iter().map(|(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    assert!(k.outcomes.iter().all(|(_, p)| *p >= 0.0));
                }
            }
        }
    }

    #[test]
    fn one_step_error_is_second_order() {
        // Single token: exact reverse kernel P(x_{t−Δt} = v | x_t = M) = p(v)(m(t) − m(t−Δt)) / m(t).
        let d = EnumerableDist::new(3, vec![(vec![0], 0.6), (vec![2], 0.4)]).unwrap();
        let s = RateSchedule::default();
        let o = ExactRatioOracle::new(&d, s);
        let x = TokenSeq::all_masked(3, 1);
        let t = 0.3;
        let mut errors = Vec::new();
        for dt in [1e-1, 1e-2, 1e-3] {
            let k = single_jump_kernel(&x, t, dt, &o, &s).unwrap();
            let (m0, m1) = (s.mask_prob(t - dt), s.mask_prob(t));
            let err = k
                .outcomes
                .iter()
                .skip(1)
                .map(|(y, p)| {
                    let exact = d.prob(y.tokens()) * (m1 - m0) / m1;
                    (p - exact).abs()
                })
                .fold(0.0, f64::max);
            errors.push((dt, err));
        }
        let c = errors[0].1 / (errors[0].0 * errors[0].0);
        for (dt, err) in errors {
            assert!(err <= 1.5 * c * dt * dt, "Δt={dt}: {err}");
        }
    }

    #[test]
    fn length_one_tau_leap_equals_single_jump() {
        let d = EnumerableDist::new(3, vec![(vec![1], 0.3), (vec![2], 0.7)]).unwrap();
        let s = RateSchedule::default();
        let o = ExactRatioOracle::new(&d, s);
        let x = TokenSeq::all_masked(3, 1);
        for (t, dt) in [(0.5, 0.05), (0.01, 0.01)] {
            let a = single_jump_kernel(&x, t, dt, &o, &s).unwrap();
            let b = tau_leap_kernel(&x, t, dt, &o, &s).unwrap();
            let la: BTreeMap<_, _> = a.outcomes.into_iter().collect();
            let lb: BTreeMap<_, _> = b.outcomes.into_iter().collect();
            assert_eq!(la.len(), lb.len());
            for (y, p) in la {
                assert!((p - lb[&y]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn point_mass_is_always_recovered() {
        let d = EnumerableDist::new(3, vec![(vec![2, 0, 1], 1.0)]).unwrap();
        let s = RateSchedule::default();
        let o = ExactRatioOracle::new(&d, s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [JumpMode::SingleJump, JumpMode::TauLeap] {
            let cfg = SeddConfig { dt: 0.05, mode, ..SeddConfig::default() };
            for _ in 0..50 {
                let (x, _) = sedd_sample_tokens(&o, &s, &cfg, None, &mut rng, &mut |_, _| {}).unwrap();
                assert_eq!(x.tokens(), &[2, 0, 1]);
            }
            let law = sedd_output_law(&o, &s, &cfg, None).unwrap();
            assert_eq!(law.len(), 1);
        }
    }

    #[test]
    fn forward_mask_rate_matches_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = RateSchedule::Constant { sigma: 2.0 };
        let b = random_solution(3, &mut rng).unwrap();
        let t = 0.35;
        let m = s.mask_prob(t);
        let reps = 1235; // ≥ 10⁵ tokens
        let mut masked = 0usize;
        for _ in 0..reps {
            masked += ctmc_forward_sample(&b, t, &s, &mut rng).unwrap().masked_set().len();
        }
        let n = (reps * 81) as f64;
        let sd = (n * m * (1.0 - m)).sqrt();
        assert!((masked as f64 - n * m).abs() < 4.0 * sd);
        assert_eq!(ctmc_forward_sample(&b, 0.0, &s, &mut rng).unwrap(), TokenSeq::from_board(&b));
    }

    #[test]
    fn forward_masks_are_monotone_under_shared_randomness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = RateSchedule::default();
        let b = random_solution(2, &mut rng).unwrap();
        for seed in 0..50 {
            let mut prev = 0;
            for t in [0.0, 0.02, 0.05, 0.1, 0.3, 1.0] {
                let x = ctmc_forward_sample(&b, t, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let m = x.masked_set();
                assert!(m.len() >= prev);
                prev = m.len();
            }
        }
    }

    struct Negative;

    impl RatioModel for Negative {
        fn seq_len(&self) -> usize {
            2
        }
        fn num_classes(&self) -> usize {
            3
        }
        fn ratios(&self, _x: &TokenSeq, _t: f64) -> Result<Vec<f64>, SeddError> {
            Ok(vec![0.1, -0.2, 0.0, 0.0, 0.0, 0.0])
        }
    }

    #[test]
    fn negative_ratio_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = RateSchedule::default();
        let err = euler_reverse_step(&TokenSeq::all_masked(3, 2), 0.5, 0.01, &Negative, &s, &mut rng).unwrap_err();
        assert!(matches!(err, SeddError::NegativeRatio { position: 0, class: 1, .. }));
    }

    #[test]
    fn config_validation() {
        assert!(SeddConfig { dt: 0.0, ..SeddConfig::default() }.validate().is_err());
        assert!(SeddConfig { dt: 2.0, ..SeddConfig::default() }.validate().is_err());
        let c = SeddConfig { dt: 0.03, ..SeddConfig::default() };
        assert_eq!(c.num_steps(), 33);
        assert!((c.step() * 33.0 - 1.0).abs() < 1e-15);
    }
}
