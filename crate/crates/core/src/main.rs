use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use inset::checkpoint::{Checkpoint, CheckpointError};
use inset::config::{ConfigError, ExperimentConfig};
use inset::data::{self, write_dataset, write_text, DataError, DatasetFile, DatasetMeta, SourceKind, SynthKind};
use inset::eval::{self, invariance_suite, mjc, render_table, write_metrics_csv, write_timings_csv, MetricsReport, ModelPredictor, RunResult};
use inset::experiment::{self, method_name, prepare_data, BenchConfig, ExperimentError, PreparedData};
use inset::model::ModelVariant;
use inset::prob::{MfviInit, ProbError, TrainMode};
use inset::sample::SetSample;
use inset::seed::{self, Stream};
use inset::train::{train, TrainError};

const OUT_DIR_ENV: &str = "INSET_OUT_DIR";

#[derive(Parser)]
#[command(name = "inset", version, about = "Superset-aware neural subset selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData(GenDataArgs),
    /// Train one seed and save the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write MJC reports.
    Eval(EvalArgs),
    /// Check permutation invariance and equivariance of a checkpoint.
    Invariance(InvarianceArgs),
    /// Reproduce the synthetic benchmark table.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: config `out_dir`, then $INSET_OUT_DIR, then ./runs].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file; defaults to the config's dataset (synthetic if no path).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: Option<SynthKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    ground_size: Option<usize>,
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long)]
    noise_var: Option<f64>,
    /// Destination file.
    #[arg(long)]
    out: PathBuf,
    /// Write the text form instead of the binary form.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    mode: Option<TrainMode>,
    #[arg(long, value_enum)]
    variant: Option<ModelVariant>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<u32>,
    #[arg(long)]
    patience: Option<u32>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    h_d: Option<usize>,
    #[arg(long, value_enum)]
    mfvi_init: Option<MfviInit>,
    /// Training seed [default: first seed of the config].
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a `last.ckpt` written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which part of the dataset to score.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Keep this many elements per prediction instead of |S*|.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    fixed_n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InvarianceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Seed of the generated datasets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of training seeds per cell (0..N).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Concurrent runs [default: all cores].
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<u32>,
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',')]
    tasks: Option<Vec<SynthKind>>,
}

/// Failures mapped onto the process exit status.
enum CliError {
    /// Bad arguments, configuration, files or formats: exit 2.
    Usage(String),
    /// Divergence or a failed invariance check: exit 3.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Usage(e.to_string())
            }
        }
    )*};
}
usage_from!(ConfigError, DataError, CheckpointError, std::io::Error, csv::Error);

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Eval(e) => e.into(),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::Prob(p) => p.into(),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ProbError> for CliError {
    fn from(e: ProbError) -> Self {
        match e {
            ProbError::TooLarge { .. } | ProbError::Model(_) | ProbError::Shape(_) | ProbError::MaskLength { .. } => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numerical(e.to_string()),
            TrainError::Config(m) => CliError::Usage(m),
            TrainError::Prob(p) => p.into(),
            TrainError::Eval(e) => e.into(),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    Ok(match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Prints a `key=value` record and appends it to `log` if given. Values
/// containing whitespace or quotes are written as quoted strings.
fn emit(log: Option<&mut fs::File>, fields: &[(&str, String)]) -> Result<(), CliError> {
    let line: Vec<String> = fields
        .iter()
        .map(|(k, v)| {
            if v.contains(char::is_whitespace) || v.contains('"') {
                format!("{k}={v:?}")
            } else {
                format!("{k}={v}")
            }
        })
        .collect();
    let line = line.join(" ");
    println!("{line}");
    if let Some(f) = log {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn prepared(cfg: &mut ExperimentConfig, data: &DataArgs) -> Result<PreparedData, CliError> {
    if let Some(p) = &data.data {
        cfg.dataset.path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(prepare_data(cfg)?)
}

fn cmd_gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.common)?;
    let mut synth = cfg.dataset.synth();
    if let Some(k) = a.kind {
        let base = data::SynthConfig::for_kind(k);
        synth.kind = k;
        if cfg.dataset.kind != k {
            synth.mu0 = base.mu0;
            synth.mu1 = base.mu1;
            synth.sigma = base.sigma;
        }
    }
    synth.seed = a.seed.unwrap_or(synth.seed);
    synth.samples_total = a.samples.unwrap_or(synth.samples_total);
    synth.ground_size = a.ground_size.unwrap_or(synth.ground_size);
    synth.subset_size = a.subset_size.unwrap_or(synth.subset_size);
    synth.noise_variance = a.noise_var.unwrap_or(synth.noise_variance);
    let samples = data::generate(&synth)?;
    let file = DatasetFile {
        meta: DatasetMeta {
            kind: SourceKind::Synthetic(synth.kind),
            noise_variance: synth.noise_variance,
            seed: synth.seed,
        },
        samples,
    };
    if a.text {
        write_text(&a.out, &file)?;
    } else {
        write_dataset(&a.out, &file)?;
    }
    emit(
        None,
        &[
            ("event", "gen-data".into()),
            ("kind", synth.kind.name().into()),
            ("count", file.samples.len().to_string()),
            ("d", file.d().to_string()),
            ("n", synth.ground_size.to_string()),
            ("subset_size", synth.subset_size.to_string()),
            ("noise_variance", synth.noise_variance.to_string()),
            ("seed", synth.seed.to_string()),
            ("out", a.out.display().to_string()),
        ],
    )
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.common)?;
    let t = &mut cfg.training;
    t.mode = a.mode.unwrap_or(t.mode);
    t.lr = a.lr.unwrap_or(t.lr);
    t.weight_decay = a.weight_decay.unwrap_or(t.weight_decay);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.max_epochs = a.max_epochs.unwrap_or(t.max_epochs);
    t.patience = a.patience.unwrap_or(t.patience);
    t.mfvi_init = a.mfvi_init.unwrap_or(t.mfvi_init);
    cfg.model.variant = a.variant.unwrap_or(cfg.model.variant);
    cfg.model.h = a.h.unwrap_or(cfg.model.h);
    cfg.model.h_d = a.h_d.unwrap_or(cfg.model.h_d);
    let data = prepared(&mut cfg, &a.data)?;
    let dir = out_dir(&a.common, &cfg)?;
    let seed = a.seed.unwrap_or(cfg.training.seeds[0]);
    let tc = cfg.train_config();

    let (model, state) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            ck.check_width(data.d)?;
            if ck.state.is_none() {
                return Err(CliError::Usage(format!("{} holds no training state", p.display())));
            }
            if ck.mode != tc.mode || ck.model.variant != cfg.model.variant || ck.model.dims != cfg.dims(data.d) {
                return Err(CliError::Usage(format!(
                    "{} was trained with a different variant, mode or dims",
                    p.display()
                )));
            }
            (ck.model, ck.state)
        }
        None => (experiment::init_model(&cfg, data.d, seed), None),
    };

    let mut log = if state.is_some() {
        fs::OpenOptions::new().append(true).create(true).open(dir.join("train.log"))?
    } else {
        fs::File::create(dir.join("train.log"))?
    };
    let start = Instant::now();
    let mut io_error = None;
    let result = train(model, &data.split.train, &data.split.validation, &tc, seed, state, |r, ck| {
        let fields = [
            ("event", "epoch".to_string()),
            ("seed", seed.to_string()),
            ("epoch", r.epoch.to_string()),
            ("train_loss", format!("{:.17e}", r.train_loss)),
            ("val_mjc", format!("{:.17e}", r.val_mjc)),
            ("improved", r.improved.to_string()),
            ("elapsed_s", format!("{:.3}", start.elapsed().as_secs_f64())),
        ];
        let step = emit(Some(&mut log), &fields).and_then(|_| Ok(ck.save(dir.join("last.ckpt"))?));
        if let Err(e) = step {
            io_error.get_or_insert(e);
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            emit(Some(&mut log), &[("event", "error".into()), ("message", e.to_string())])?;
            return Err(e.into());
        }
    };
    let best = Checkpoint::new(out.best.clone(), tc.mode);
    best.save(dir.join("checkpoint.ckpt"))?;
    out.last.save(dir.join("last.ckpt"))?;
    let predictor = ModelPredictor {
        model: &out.best,
        mode: tc.mode,
        hyper: tc.hyper,
        seed,
    };
    let test = mjc(&predictor, &data.split.test, tc.n_out)?;
    emit(
        Some(&mut log),
        &[
            ("event", "done".into()),
            ("seed", seed.to_string()),
            ("task", data.task.clone()),
            ("method", method_name(cfg.model.variant, tc.mode)),
            ("best_epoch", out.best_epoch.to_string()),
            ("best_val_mjc", format!("{:.17e}", out.best_val)),
            ("test_mjc", format!("{:.17e}", test)),
            ("checkpoint", dir.join("checkpoint.ckpt").display().to_string()),
            ("elapsed_s", format!("{:.3}", start.elapsed().as_secs_f64())),
        ],
    )
}

fn pick_split(data: &PreparedData, which: SplitArg) -> Vec<SetSample> {
    let s = &data.split;
    match which {
        SplitArg::Train => s.train.clone(),
        SplitArg::Validation => s.validation.clone(),
        SplitArg::Test => s.test.clone(),
        SplitArg::All => [&s.train[..], &s.validation, &s.test].concat(),
    }
}

fn write_reports(dir: &Path, stem: &str, reports: &[MetricsReport]) -> Result<(), CliError> {
    write_metrics_csv(reports, fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    write_timings_csv(reports, fs::File::create(dir.join(format!("{stem}_timings.csv")))?)?;
    fs::write(dir.join(format!("{stem}.txt")), render_table(reports))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.common)?;
    if let Some(n) = a.fixed_n {
        cfg.eval.fixed_n = Some(n as usize);
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let data = prepared(&mut cfg, &a.data)?;
    ck.check_width(data.d)?;
    let dir = out_dir(&a.common, &cfg)?;
    let samples = pick_split(&data, a.split);
    let hyper = cfg.train_config().hyper;
    let predictor = ModelPredictor {
        model: &ck.model,
        mode: ck.mode,
        hyper,
        seed: a.seed,
    };
    let start = Instant::now();
    let value = mjc(&predictor, &samples, cfg.n_out())?;
    let report = MetricsReport::from_runs(
        &data.task,
        &method_name(ck.model.variant, ck.mode),
        cfg.n_out(),
        vec![RunResult::ok(a.seed, value, start.elapsed().as_secs_f64())],
    );
    write_reports(&dir, "metrics", std::slice::from_ref(&report))?;
    emit(
        None,
        &[
            ("event", "eval".into()),
            ("task", report.task.clone()),
            ("method", report.method.clone()),
            ("n_out", cfg.n_out().label()),
            ("samples", samples.len().to_string()),
            ("mjc", format!("{value:.17e}")),
            ("out", dir.join("metrics.csv").display().to_string()),
        ],
    )
}

fn cmd_invariance(a: InvarianceArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.common)?;
    if let Some(t) = a.trials {
        cfg.eval.trials = t as usize;
    }
    if let Some(t) = a.tolerance {
        cfg.eval.tolerance = t;
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let data = prepared(&mut cfg, &a.data)?;
    ck.check_width(data.d)?;
    let dir = out_dir(&a.common, &cfg)?;
    let samples = pick_split(&data, SplitArg::All);
    let mut rng = seed::rng(a.seed, Stream::Invariance, 0);
    let r = invariance_suite(&ck.model, &samples, cfg.eval.trials, cfg.eval.tolerance, &mut rng)?;
    let fields = [
        ("event", "invariance".to_string()),
        ("trials", r.trials.to_string()),
        ("max_energy_deviation", format!("{:e}", r.max_energy_deviation)),
        ("max_equivariance_deviation", format!("{:e}", r.max_equivariance_deviation)),
        ("tolerance", format!("{:e}", r.tolerance)),
        ("passed", r.passed.to_string()),
    ];
    let mut file = fs::File::create(dir.join("invariance.txt"))?;
    emit(Some(&mut file), &fields)?;
    if r.passed {
        Ok(())
    } else {
        Err(CliError::Numerical("invariance check failed".into()))
    }
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let mut base = load_config(&a.common)?;
    base.training.lr = a.lr.unwrap_or(base.training.lr);
    base.training.max_epochs = a.max_epochs.unwrap_or(base.training.max_epochs);
    base.validate()?;
    let dir = out_dir(&a.common, &base)?;
    let cfg = BenchConfig {
        data_seed: a.seed,
        seeds: (0..a.seeds).collect(),
        tasks: a.tasks.unwrap_or_else(|| BenchConfig::default().tasks),
        jobs: a.jobs,
        base,
    };
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let start = Instant::now();
    let reports = experiment::run_bench(&cfg)?;
    write_reports(&dir, "bench", &reports)?;
    print!("{}", render_table(&reports));
    for r in &reports {
        for run in r.runs.iter().filter(|r| r.error.is_some()) {
            emit(
                None,
                &[
                    ("event", "cell-failed".into()),
                    ("task", r.task.clone()),
                    ("method", r.method.clone()),
                    ("seed", run.seed.to_string()),
                    ("message", run.error.clone().unwrap_or_default()),
                ],
            )?;
        }
    }
    emit(
        None,
        &[
            ("event", "bench".into()),
            ("out", dir.join("bench.csv").display().to_string()),
            ("elapsed_s", format!("{:.3}", start.elapsed().as_secs_f64())),
        ],
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Invariance(a) => cmd_invariance(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Numerical(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}
