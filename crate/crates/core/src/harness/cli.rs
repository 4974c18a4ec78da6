//! `ddcsp` subcommands. Every flag is folded into the configuration as an
//! override, so a value resolves as flag, then config file, then default.

use super::eval::{run_eval, ConstantSolver, MlmSolver, OracleSolver, PuzzleSolver, SeddSolver};
use super::report::{emit_report, read_csv_summary, render_table, ReportFormat, Summary};
use super::{Config, HarnessError};
use crate::denoiser::{train_denoiser, DenoiserConfig, LrSchedule, TrainConfig, TransformerDenoiser};
use crate::diffusion::Schedule;
use crate::grad::{load_checkpoint, save_checkpoint};
use crate::guidance::{
    train_value_net, AnalyticValue, Guidance, GuidanceConfig, LearnedValue, ValueFunction,
    ValueNetConfig, ValueSource, ValueTrainConfig,
};
use crate::scalar::Scalar;
use crate::sedd::{sedd_sample, DenoiserRatios, JumpMode, RateSchedule, SeddConfig};
use crate::sudoku::{
    format_board, generate_puzzle, load_dataset, parse_board, random_solution, save_dataset, Board,
    Dataset, DatasetKind,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "ddcsp", version, about = "Guided discrete diffusion for Sudoku")]
struct Cli {
    /// Directory all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Configuration file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a dataset of solutions, or of puzzle/solution pairs when `--givens` is set.
    GenData(GenData),
    /// Train the transformer denoiser on a solutions file.
    TrainDenoiser(TrainDenoiserArgs),
    /// Train the learned constraint value network.
    TrainValue(TrainValueArgs),
    /// Complete one puzzle and print the board.
    Solve(SolveArgs),
    /// Benchmark a sampler on a puzzle/solution file.
    Eval(EvalArgs),
    /// Draw boards with the continuous-time sampler.
    SeddSample(SeddSampleArgs),
    /// Merge CSV reports into one summary table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    givens: Option<usize>,
    /// Require a unique solution for every puzzle.
    #[arg(long)]
    unique: Option<bool>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct TrainDenoiserArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    held_out: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
}

#[derive(Debug, Args)]
struct TrainValueArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

/// Sampler selection shared by `solve`, `eval` and `sedd-sample`.
#[derive(Debug, Args)]
struct SamplerArgs {
    /// oracle, constant, mlm or sedd.
    #[arg(long)]
    method: Option<String>,
    /// Denoiser checkpoint.
    #[arg(long)]
    ckpt: Option<String>,
    /// Enable guided refinement.
    #[arg(long)]
    guide: bool,
    /// analytic or learned.
    #[arg(long)]
    value: Option<String>,
    #[arg(long)]
    value_ckpt: Option<String>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    puzzle: String,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<String>,
    /// Candidates per puzzle; solved when any passes.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Method label in the report.
    #[arg(long)]
    tag: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct SeddSampleArgs {
    #[arg(long)]
    ckpt: Option<String>,
    /// Condition on this puzzle instead of sampling freely.
    #[arg(long)]
    puzzle: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    /// single-jump or tau-leap.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// CSV reports to merge.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(long)]
    out: Option<String>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Ctx {
    workdir: PathBuf,
    cfg: Config,
    seed: u64,
}

impl Ctx {
    fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    fn get<V: std::str::FromStr>(&self, section: &str, key: &str, default: V) -> Result<V, HarnessError> {
        self.cfg.get_or(section, key, default)
    }

    fn string(&self, section: &str, key: &str, default: &str) -> Result<String, HarnessError> {
        self.get(section, key, default.to_string())
    }

    fn required(&self, section: &str, key: &str) -> Result<String, HarnessError> {
        self.cfg
            .raw(section, key)
            .map(str::to_string)
            .ok_or_else(|| HarnessError::BadArgument(format!("missing {section}.{key}")))
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn set<V: ToString>(cfg: &mut Config, section: &str, key: &str, v: &Option<V>) {
    if let Some(v) = v {
        cfg.insert(section, key, &v.to_string());
    }
}

fn set_sampler(cfg: &mut Config, s: &SamplerArgs) {
    set(cfg, "sampler", "method", &s.method);
    set(cfg, "sampler", "ckpt", &s.ckpt);
    if s.guide {
        cfg.insert("sampler", "guide", "true");
    }
    set(cfg, "guidance", "value", &s.value);
    set(cfg, "guidance", "value_ckpt", &s.value_ckpt);
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(&cli.workdir.join(p))?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    set(&mut cfg, "", "seed", &cli.seed);
    match &cli.command {
        Command::GenData(a) => {
            set(&mut cfg, "data", "order", &a.order);
            set(&mut cfg, "data", "count", &a.count);
            set(&mut cfg, "data", "givens", &a.givens);
            set(&mut cfg, "data", "unique", &a.unique);
            set(&mut cfg, "data", "out", &a.out);
        }
        Command::TrainDenoiser(a) => {
            set(&mut cfg, "denoiser", "data", &a.data);
            set(&mut cfg, "denoiser", "held_out", &a.held_out);
            set(&mut cfg, "train", "steps", &a.steps);
            set(&mut cfg, "denoiser", "out", &a.out);
            set(&mut cfg, "denoiser", "metrics", &a.metrics);
        }
        Command::TrainValue(a) => {
            set(&mut cfg, "value", "data", &a.data);
            set(&mut cfg, "value", "steps", &a.steps);
            set(&mut cfg, "value", "out", &a.out);
        }
        Command::Solve(a) => set_sampler(&mut cfg, &a.sampler),
        Command::Eval(a) => {
            set(&mut cfg, "eval", "data", &a.data);
            set(&mut cfg, "eval", "samples", &a.samples);
            set(&mut cfg, "eval", "out", &a.out);
            set(&mut cfg, "eval", "format", &a.format);
            set(&mut cfg, "eval", "tag", &a.tag);
            set_sampler(&mut cfg, &a.sampler);
        }
        Command::SeddSample(a) => {
            cfg.insert("sampler", "method", "sedd");
            set(&mut cfg, "sampler", "ckpt", &a.ckpt);
            set(&mut cfg, "sedd", "count", &a.count);
            set(&mut cfg, "sedd", "mode", &a.mode);
            set(&mut cfg, "sedd", "dt", &a.dt);
            set(&mut cfg, "sedd", "out", &a.out);
        }
        Command::Report(_) => {}
    }
    let seed = cfg.get_or("", "seed", 0u64)?;
    let ctx = Ctx {
        workdir: cli.workdir.clone(),
        cfg,
        seed,
    };
    let dtype = ctx.string("", "dtype", "f32")?;
    match (dtype.as_str(), &cli.command) {
        (_, Command::GenData(_)) => gen_data(&ctx),
        (_, Command::Report(a)) => report(&ctx, a),
        ("f32", cmd) => dispatch::<f32>(&ctx, cmd),
        ("f64", cmd) => dispatch::<f64>(&ctx, cmd),
        (other, _) => Err(HarnessError::BadArgument(format!("dtype {other:?} is not f32 or f64"))),
    }
}

fn dispatch<T: Scalar>(ctx: &Ctx, cmd: &Command) -> Result<(), HarnessError> {
    match cmd {
        Command::TrainDenoiser(_) => train_denoiser_cmd::<T>(ctx),
        Command::TrainValue(_) => train_value_cmd::<T>(ctx),
        Command::Solve(a) => {
            let puzzle = parse_board(&a.puzzle)?;
            let board = with_solver::<T, _>(ctx, puzzle.order(), |solver, _| {
                solver.solve(&puzzle, &mut ctx.rng())
            })?;
            print!("{}", format_board(&board));
            Ok(())
        }
        Command::Eval(_) => eval_cmd::<T>(ctx),
        Command::SeddSample(a) => sedd_sample_cmd::<T>(ctx, a.puzzle.as_deref()),
        Command::GenData(_) | Command::Report(_) => unreachable!("handled before dtype dispatch"),
    }
}

fn gen_data(ctx: &Ctx) -> Result<(), HarnessError> {
    let order = ctx.get("data", "order", 2usize)?;
    let count = ctx.get("data", "count", 100usize)?;
    let unique = ctx.get("data", "unique", true)?;
    let out = ctx.path(&ctx.string("data", "out", "data.txt")?);
    let mut rng = ctx.rng();
    let dataset = match ctx.cfg.raw("data", "givens") {
        Some(_) => {
            let givens = ctx.get("data", "givens", 0usize)?;
            let pairs = (0..count)
                .map(|_| generate_puzzle(&mut rng, order, givens, unique))
                .collect::<Result<Vec<_>, _>>()?;
            Dataset::Pairs(pairs)
        }
        None => {
            // distinct solutions; the 4×4 grid has only 288
            if order == 2 && count > 288 {
                return Err(HarnessError::BadArgument(format!(
                    "only 288 distinct 4×4 solutions exist, {count} requested"
                )));
            }
            let mut seen = HashSet::new();
            let mut boards = Vec::with_capacity(count);
            while boards.len() < count {
                let b = random_solution(order, &mut rng)?;
                if seen.insert(b.clone()) {
                    boards.push(b);
                }
            }
            Dataset::Solutions(boards)
        }
    };
    save_dataset(&dataset, &out)?;
    println!("wrote {} entries to {}", dataset.len(), out.display());
    Ok(())
}

fn load_solutions(ctx: &Ctx, path: &str) -> Result<Vec<Board>, HarnessError> {
    let p = ctx.path(path);
    let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::Io {
        path: p.display().to_string(),
        reason: e.to_string(),
    })?;
    // a solutions file has only complete boards; otherwise read it as pairs
    let kind = if text.lines().filter(|l| !l.trim().is_empty()).all(|l| !l.contains('0')) {
        DatasetKind::Solutions
    } else {
        DatasetKind::Pairs
    };
    Ok(load_dataset(&p, kind)?.solutions().into_iter().cloned().collect())
}

fn denoiser_config(ctx: &Ctx, order: usize) -> Result<DenoiserConfig, HarnessError> {
    let d = DenoiserConfig::for_order(order);
    let s = "denoiser";
    Ok(DenoiserConfig {
        order,
        embed: ctx.get(s, "embed", d.embed)?,
        layers: ctx.get(s, "layers", d.layers)?,
        heads: ctx.get(s, "heads", d.heads)?,
        ffn: ctx.get(s, "ffn", d.ffn)?,
        max_t: ctx.get(s, "max_t", d.max_t)?,
        dropout: ctx.get(s, "dropout", d.dropout)?,
        seed: ctx.get(s, "seed", ctx.seed)?,
    })
}

fn train_config(ctx: &Ctx) -> Result<TrainConfig, HarnessError> {
    let d = TrainConfig::default();
    let LrSchedule::WarmupCosine { peak, warmup, floor } = d.lr else {
        unreachable!("default schedule is warmup-cosine")
    };
    let s = "train";
    let lr = match ctx.string(s, "schedule", "cosine")?.as_str() {
        "cosine" => LrSchedule::WarmupCosine {
            peak: ctx.get(s, "lr", peak)?,
            warmup: ctx.get(s, "warmup", warmup)?,
            floor: ctx.get(s, "floor", floor)?,
        },
        "constant" => LrSchedule::Constant(ctx.get(s, "lr", peak)?),
        other => return Err(HarnessError::BadArgument(format!("unknown lr schedule {other:?}"))),
    };
    Ok(TrainConfig {
        batch: ctx.get(s, "batch", d.batch)?,
        steps: ctx.get(s, "steps", d.steps)?,
        lr,
        eval_every: ctx.get(s, "eval_every", d.eval_every)?,
        seed: ctx.seed,
        checkpoint: None,
    })
}

fn train_denoiser_cmd<T: Scalar>(ctx: &Ctx) -> Result<(), HarnessError> {
    let solutions = load_solutions(ctx, &ctx.required("denoiser", "data")?)?;
    let held_out = match ctx.cfg.raw("denoiser", "held_out") {
        Some(p) => load_solutions(ctx, p)?,
        None => Vec::new(),
    };
    let order = solutions.first().map(Board::order).ok_or(HarnessError::EmptyEvalSet)?;
    let dcfg = denoiser_config(ctx, order)?;
    let tcfg = train_config(ctx)?;
    let schedule = Schedule::<T>::linear(dcfg.max_t)?;
    let out = ctx.string("denoiser", "out", "denoiser.ckpt")?;
    let metrics_path = ctx.string("denoiser", "metrics", &format!("{out}.metrics.csv"))?;
    let (model, metrics) = train_denoiser(&solutions, &held_out, &dcfg, &tcfg, &schedule, &mut |m| {
        if let Some(acc) = m.eval_acc {
            eprintln!("step {} loss {:.4} held-out acc {:.4}", m.step, m.loss, acc);
        }
    })?;
    save_checkpoint(&model.to_checkpoint(), &ctx.path(&out))?;
    let mut csv = String::from("step,loss,eval_acc\n");
    for m in &metrics {
        let acc = m.eval_acc.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", m.step, m.loss, acc);
    }
    write_file(&ctx.path(&metrics_path), &csv)?;
    println!("wrote {out} after {} steps", metrics.len());
    Ok(())
}

fn train_value_cmd<T: Scalar>(ctx: &Ctx) -> Result<(), HarnessError> {
    let solutions = load_solutions(ctx, &ctx.required("value", "data")?)?;
    let order = solutions.first().map(Board::order).ok_or(HarnessError::EmptyEvalSet)?;
    let d = ValueTrainConfig::default();
    let s = "value";
    let tcfg = ValueTrainConfig {
        steps: ctx.get(s, "steps", d.steps)?,
        batch: ctx.get(s, "batch", d.batch)?,
        lr: ctx.get(s, "lr", d.lr)?,
        max_corrupt: ctx.get(s, "max_corrupt", d.max_corrupt)?,
    };
    let ncfg = ValueNetConfig {
        order,
        hidden: ctx.get(s, "hidden", ValueNetConfig::new(order).hidden)?,
    };
    let mut rng = ctx.rng();
    let mut net = LearnedValue::<T>::new(ncfg, &mut rng)?;
    let losses = train_value_net(&mut net, &solutions, &tcfg, &mut rng)?;
    let out = ctx.string(s, "out", "value.ckpt")?;
    save_checkpoint(&net.to_checkpoint(), &ctx.path(&out))?;
    println!("wrote {out}, final loss {:.4}", losses.last().copied().unwrap_or(0.0));
    Ok(())
}

fn guidance_config(ctx: &Ctx) -> Result<GuidanceConfig, HarnessError> {
    let d = GuidanceConfig::default();
    let s = "guidance";
    let value = match ctx.string(s, "value", "learned")?.as_str() {
        "learned" => ValueSource::Learned,
        "analytic" => ValueSource::Analytic,
        other => return Err(HarnessError::BadArgument(format!("unknown value source {other:?}"))),
    };
    let cfg = GuidanceConfig {
        steps: ctx.get(s, "steps", d.steps)?,
        eta: ctx.get(s, "eta", d.eta)?,
        lambda: ctx.get(s, "lambda", d.lambda)?,
        tau: ctx.get(s, "tau", d.tau)?,
        hard: ctx.get(s, "hard", d.hard)?,
        value,
        resample_noise: ctx.get(s, "resample_noise", d.resample_noise)?,
        every: ctx.get(s, "every", d.every)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sedd_settings(ctx: &Ctx) -> Result<(RateSchedule, SeddConfig), HarnessError> {
    let d = SeddConfig::default();
    let s = "sedd";
    let horizon = ctx.get(s, "horizon", d.horizon)?;
    let sigma = ctx.get(s, "sigma", 14.0 / horizon)?;
    let mode = match ctx.string(s, "mode", "single-jump")?.as_str() {
        "single-jump" => JumpMode::SingleJump,
        "tau-leap" => JumpMode::TauLeap,
        other => return Err(HarnessError::BadArgument(format!("unknown jump mode {other:?}"))),
    };
    let rate = RateSchedule::Constant { sigma };
    rate.validate()?;
    let cfg = SeddConfig {
        horizon,
        dt: ctx.get(s, "dt", d.dt)?,
        mode,
        seed: ctx.seed,
    };
    cfg.validate()?;
    Ok((rate, cfg))
}

fn load_denoiser<T: Scalar>(ctx: &Ctx, order: usize) -> Result<TransformerDenoiser<T>, HarnessError> {
    let path = ctx.required("sampler", "ckpt")?;
    let model = TransformerDenoiser::<T>::from_checkpoint(&load_checkpoint(&ctx.path(&path))?)?;
    if model.config().order != order {
        return Err(HarnessError::BadArgument(format!(
            "checkpoint {path} is for order {}, puzzles have order {order}",
            model.config().order
        )));
    }
    Ok(model)
}

/// Builds the configured sampler and hands it to `f` with its report label.
fn with_solver<T: Scalar, R>(
    ctx: &Ctx,
    order: usize,
    f: impl FnOnce(&dyn PuzzleSolver, &str) -> Result<R, HarnessError>,
) -> Result<R, HarnessError> {
    let method = ctx.string("sampler", "method", "mlm")?;
    match method.as_str() {
        "oracle" => f(&OracleSolver, "oracle"),
        "constant" => f(&ConstantSolver(ctx.get("sampler", "digit", 1u8)?), "constant"),
        "mlm" => {
            let model = load_denoiser::<T>(ctx, order)?;
            let steps = ctx.get("sampler", "steps", model.config().max_t)?;
            let schedule = Schedule::<T>::linear(steps)?;
            let stride = ctx.get("sampler", "stride", 1usize)?;
            if !ctx.get("sampler", "guide", false)? {
                let solver = MlmSolver {
                    denoiser: &model,
                    schedule: &schedule,
                    guidance: None,
                    stride,
                };
                return f(&solver, "DDCSP");
            }
            let gcfg = guidance_config(ctx)?;
            let value: Box<dyn ValueFunction<T>> = match gcfg.value {
                ValueSource::Analytic => Box::new(AnalyticValue::for_order(order)),
                ValueSource::Learned => {
                    let path = ctx.cfg.raw("guidance", "value_ckpt").ok_or_else(|| {
                        HarnessError::BadArgument(
                            "learned value guidance needs guidance.value_ckpt (or use --value analytic)".into(),
                        )
                    })?;
                    let net = LearnedValue::<T>::from_checkpoint(&load_checkpoint(&ctx.path(path))?)?;
                    if net.config().order != order {
                        return Err(HarnessError::BadArgument(format!("value net {path} has the wrong order")));
                    }
                    Box::new(net)
                }
            };
            let solver = MlmSolver {
                denoiser: &model,
                schedule: &schedule,
                guidance: Some(Guidance {
                    config: &gcfg,
                    value: value.as_ref(),
                }),
                stride,
            };
            f(&solver, "DDCSP+guidance")
        }
        "sedd" => {
            let model = load_denoiser::<T>(ctx, order)?;
            let (rate, config) = sedd_settings(ctx)?;
            let ratios = DenoiserRatios::<T, _>::new(&model, rate, model.config().max_t);
            let solver = SeddSolver {
                ratios: &ratios,
                schedule: rate,
                config,
            };
            f(&solver, "SEDD")
        }
        other => Err(HarnessError::BadArgument(format!("unknown method {other:?}"))),
    }
}

fn eval_cmd<T: Scalar>(ctx: &Ctx) -> Result<(), HarnessError> {
    let data = ctx.required("eval", "data")?;
    let mut pairs = match load_dataset(&ctx.path(&data), DatasetKind::Pairs)? {
        Dataset::Pairs(p) => p,
        Dataset::Solutions(_) => unreachable!("loaded as pairs"),
    };
    if let Some(limit) = ctx.cfg.raw("eval", "limit") {
        let limit: usize = limit
            .parse()
            .map_err(|_| HarnessError::BadArgument(format!("eval.limit = {limit:?}")))?;
        pairs.truncate(limit);
    }
    let order = pairs.first().map(|(p, _)| p.order()).ok_or(HarnessError::EmptyEvalSet)?;
    let samples = ctx.get("eval", "samples", 1usize)?;
    let format: ReportFormat = ctx.string("eval", "format", "csv")?.parse()?;
    let default_out = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Json => "report.json",
    };
    let out = ctx.string("eval", "out", default_out)?;
    let timed = ctx.get("eval", "timed", false)?;
    let report = with_solver::<T, _>(ctx, order, |solver, label| {
        let tag = ctx.string("eval", "tag", label)?;
        run_eval(solver, &pairs, samples, ctx.seed, &tag, &data, ctx.cfg.flatten(), timed)
    })?;
    emit_report(&report, format, &ctx.path(&out))?;
    println!(
        "{}: solved {}/{} ({:.1}%), best of {}",
        report.method,
        report.solved,
        report.total,
        report.solve_rate * 100.0,
        samples
    );
    Ok(())
}

fn sedd_sample_cmd<T: Scalar>(ctx: &Ctx, puzzle: Option<&str>) -> Result<(), HarnessError> {
    let puzzle = puzzle.map(parse_board).transpose()?;
    let model_order = {
        let path = ctx.required("sampler", "ckpt")?;
        let ckpt = load_checkpoint::<T>(&ctx.path(&path))?;
        TransformerDenoiser::<T>::from_checkpoint(&ckpt)?.config().order
    };
    let order = puzzle.as_ref().map_or(model_order, Board::order);
    let model = load_denoiser::<T>(ctx, order)?;
    let (rate, config) = sedd_settings(ctx)?;
    let ratios = DenoiserRatios::<T, _>::new(&model, rate, model.config().max_t);
    let count = ctx.get("sedd", "count", 1usize)?;
    let mut rng = ctx.rng();
    let mut text = String::new();
    for _ in 0..count {
        let board = sedd_sample(&ratios, &rate, &config, puzzle.as_ref(), &mut rng)?;
        let _ = writeln!(text, "{}", board.to_line());
    }
    match ctx.cfg.raw("sedd", "out") {
        Some(out) => write_file(&ctx.path(out), &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn report(ctx: &Ctx, args: &ReportArgs) -> Result<(), HarnessError> {
    let mut summaries: Vec<Summary> = Vec::new();
    for input in &args.inputs {
        let p = ctx.path(input);
        let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::Io {
            path: p.display().to_string(),
            reason: e.to_string(),
        })?;
        summaries.push(read_csv_summary(&text)?);
    }
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &summaries {
            w.serialize(s).map_err(|e| HarnessError::Report(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
        write_file(&ctx.path(out), &String::from_utf8_lossy(&bytes))?;
    }
    let rows: Vec<(String, f64)> = summaries.iter().map(|s| (s.method.clone(), s.solve_rate)).collect();
    print!("{}", render_table(&rows));
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
