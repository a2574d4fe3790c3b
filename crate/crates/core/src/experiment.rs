//! Multi-seed experiments and the synthetic benchmark table.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::{self, read_dataset, split, DataError, Split, SynthConfig, SynthKind};
use crate::eval::{mjc, EvalError, MetricsReport, ModelPredictor, NOut, RandomPredictor, RunResult};
use crate::model::{InsetModel, ModelVariant};
use crate::prob::TrainMode;
use crate::seed::{self, Stream};
use crate::train::{train, EpochRecord, TrainError, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("dataset mixes feature widths")]
    MixedWidths,
}

/// A dataset split and ready to train on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Name used in reports: the synthetic kind or the file stem.
    pub task: String,
    pub d: usize,
    pub split: Split,
}

/// Loads `dataset.path` or generates the synthetic dataset, then splits it
/// with the configured ratios and the dataset seed.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData, ExperimentError> {
    let ds = &cfg.dataset;
    let (task, samples) = match &ds.path {
        Some(p) => {
            let file = read_dataset(p)?;
            let stem = p.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
            (stem, file.samples)
        }
        None => (ds.kind.name().to_string(), data::generate(&ds.synth())?),
    };
    let d = samples.first().ok_or(ExperimentError::EmptyDataset)?.d();
    if samples.iter().any(|s| s.d() != d) {
        return Err(ExperimentError::MixedWidths);
    }
    Ok(PreparedData {
        task,
        d,
        split: split(&samples, ds.split, ds.seed)?,
    })
}

pub fn method_name(variant: ModelVariant, mode: TrainMode) -> String {
    format!("{}+{}", variant.name(), mode.name())
}

/// Initial model for `seed`, drawn from its `Init` stream.
pub fn init_model(cfg: &ExperimentConfig, d: usize, seed: u64) -> InsetModel {
    InsetModel::new(cfg.model.variant, cfg.dims(d), &mut seed::rng(seed, Stream::Init, 0))
}

/// Trains one seed and scores the best-validation model on the test split.
pub fn run_seed(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
    on_epoch: impl FnMut(&EpochRecord, &crate::checkpoint::Checkpoint),
) -> Result<(TrainOutcome, f64), TrainError> {
    let tc = cfg.train_config();
    let model = init_model(cfg, data.d, seed);
    let out = train(model, &data.split.train, &data.split.validation, &tc, seed, None, on_epoch)?;
    let predictor = ModelPredictor {
        model: &out.best,
        mode: tc.mode,
        hyper: tc.hyper,
        seed,
    };
    let test = mjc(&predictor, &data.split.test, tc.n_out)?;
    Ok((out, test))
}

fn timed_run(cfg: &ExperimentConfig, data: &PreparedData, seed: u64) -> RunResult {
    let start = Instant::now();
    match run_seed(cfg, data, seed, |_, _| {}) {
        Ok((_, test)) => RunResult::ok(seed, test, start.elapsed().as_secs_f64()),
        Err(e) => RunResult::failed(seed, e.to_string(), start.elapsed().as_secs_f64()),
    }
}

/// Trains and evaluates every configured seed. Seeds run concurrently on
/// the current rayon pool; a failed seed is recorded in the report rather
/// than aborting the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport, ExperimentError> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    Ok(run_prepared(cfg, &data))
}

pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData) -> MetricsReport {
    let runs = cfg
        .training
        .seeds
        .par_iter()
        .map(|&s| timed_run(cfg, data, s))
        .collect();
    MetricsReport::from_runs(
        &data.task,
        &method_name(cfg.model.variant, cfg.training.mode),
        cfg.n_out(),
        runs,
    )
}

fn random_run(data: &PreparedData, seed: u64, n_out: NOut) -> RunResult {
    let start = Instant::now();
    match mjc(&RandomPredictor { seed }, &data.split.test, n_out) {
        Ok(v) => RunResult::ok(seed, v, start.elapsed().as_secs_f64()),
        Err(e) => RunResult::failed(seed, e.to_string(), start.elapsed().as_secs_f64()),
    }
}

pub fn run_random(data: &PreparedData, seeds: &[u64], n_out: NOut) -> MetricsReport {
    let runs = seeds.iter().map(|&s| random_run(data, s, n_out)).collect();
    MetricsReport::from_runs(&data.task, "random", n_out, runs)
}

/// Settings of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Seed of the generated datasets.
    pub data_seed: u64,
    /// Training seeds per cell.
    pub seeds: Vec<u64>,
    /// Shared model, training and eval settings; dataset, variant and mode
    /// are filled in per cell.
    pub base: ExperimentConfig,
    pub tasks: Vec<SynthKind>,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            data_seed: 0,
            seeds: (0..5).collect(),
            base: ExperimentConfig::default(),
            tasks: vec![SynthKind::TwoMoons, SynthKind::GaussianMixture],
            jobs: 0,
        }
    }
}

/// The trained cells of the benchmark, in table row order.
pub const BENCH_CELLS: [(ModelVariant, TrainMode); 2] = [
    (ModelVariant::DeepSetsOnly, TrainMode::Direct),
    (ModelVariant::Inset, TrainMode::Variational),
];

/// Random, DeepSets and INSET rows over every task, `seeds` each.
///
/// All (cell, seed) runs are scheduled together so that `jobs` workers stay
/// busy; reports are assembled in a fixed order afterwards.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<MetricsReport>, ExperimentError> {
    let mut prepared = Vec::new();
    let mut cell_cfgs = Vec::new();
    for &kind in &cfg.tasks {
        let mut base = cfg.base.clone();
        base.dataset = crate::config::DatasetSection::from_synth(&SynthConfig {
            seed: cfg.data_seed,
            ..SynthConfig::for_kind(kind)
        });
        base.training.seeds = cfg.seeds.clone();
        base.validate()?;
        prepared.push(prepare_data(&base)?);
        cell_cfgs.push(
            BENCH_CELLS
                .iter()
                .map(|&(variant, mode)| {
                    let mut c = base.clone();
                    c.model.variant = variant;
                    c.training.mode = mode;
                    c
                })
                .collect::<Vec<_>>(),
        );
    }
    let units: Vec<(usize, usize, u64)> = (0..cfg.tasks.len())
        .flat_map(|t| (0..BENCH_CELLS.len()).flat_map(move |c| cfg.seeds.iter().map(move |&s| (t, c, s))))
        .collect();
    let work = || -> Vec<RunResult> {
        units
            .par_iter()
            .map(|&(t, c, s)| timed_run(&cell_cfgs[t][c], &prepared[t], s))
            .collect()
    };
    let results = if cfg.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .expect("thread pool")
            .install(work)
    };

    let n_out = cfg.base.n_out();
    let mut reports = Vec::new();
    for (t, data) in prepared.iter().enumerate() {
        reports.push(run_random(data, &cfg.seeds, n_out));
        for (c, &(variant, mode)) in BENCH_CELLS.iter().enumerate() {
            let runs = units
                .iter()
                .zip(&results)
                .filter(|((ut, uc, _), _)| *ut == t && *uc == c)
                .map(|(_, r)| r.clone())
                .collect();
            reports.push(MetricsReport::from_runs(&data.task, &method_name(variant, mode), n_out, runs));
        }
    }
    Ok(reports)
}
