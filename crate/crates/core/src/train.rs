//! Mini-batch training with early stopping on validation MJC.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::Tape;
use crate::checkpoint::{Checkpoint, TrainState};
use crate::eval::{mjc, EvalError, ModelPredictor, NOut};
use crate::model::InsetModel;
use crate::optim::{Adam, AdamConfig};
use crate::prob::{training_loss, LossHyper, ProbError, TrainMode, MAX_ENUMERATION};
use crate::sample::SetSample;
use crate::seed::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub hyper: LossHyper,
    /// Epochs without validation improvement before stopping.
    pub patience: u32,
    pub max_epochs: u32,
    pub n_out: NOut,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Variational,
            adam: AdamConfig::default(),
            batch_size: 32,
            hyper: LossHyper::default(),
            patience: 6,
            max_epochs: 100,
            n_out: NOut::PerSample,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite {what} at epoch {epoch}")]
    Diverged { epoch: u32, what: &'static str },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: u32,
    pub train_loss: f64,
    pub val_mjc: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub best: InsetModel,
    pub best_epoch: u32,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
    /// Final parameters and optimizer state, for resuming.
    pub last: Checkpoint,
}

/// Mean loss and summed gradients of one sample.
fn sample_grad(
    model: &InsetModel,
    sample: &SetSample,
    cfg: &TrainConfig,
    rng_seed: u64,
) -> Result<(f64, Vec<Tensor>), ProbError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mut rng = seed::rng_from(rng_seed);
    let loss = training_loss(&mut tape, &bound, model, sample, cfg.mode, &cfg.hyper, &mut rng)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;
    Ok((value, bound.vars().iter().map(|&v| grads.wrt(v)).collect()))
}

fn validate(train: &[SetSample], val: &[SetSample], cfg: &TrainConfig) -> Result<(), TrainError> {
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(TrainError::Config("batch_size and max_epochs must be at least 1".into()));
    }
    if cfg.mode == TrainMode::Exact {
        if let Some(s) = train.iter().chain(val).find(|s| s.n() > MAX_ENUMERATION) {
            return Err(ProbError::TooLarge {
                n: s.n(),
                max: MAX_ENUMERATION,
            }
            .into());
        }
    }
    Ok(())
}

/// Trains `model` on `train`, selecting the epoch with the best MJC on `val`.
///
/// Randomness: the epoch order comes from the `Shuffle` stream, and every
/// per-sample loss gets its own `Sampling` generator keyed by epoch and
/// position, so results do not depend on thread scheduling. Passing the
/// checkpoint saved after some epoch as `resume` continues with exactly the
/// losses an uninterrupted run would have produced.
pub fn train(
    model: InsetModel,
    train: &[SetSample],
    val: &[SetSample],
    cfg: &TrainConfig,
    seed: u64,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochRecord, &Checkpoint),
) -> Result<TrainOutcome, TrainError> {
    validate(train, val, cfg)?;
    let mut model = model;
    let (mut adam, start_epoch, mut best_params, mut best_epoch, mut best_val, mut since_best) =
        match resume {
            Some(s) => (
                Adam::from_parts(cfg.adam, s.adam_step, s.first_moments, s.second_moments)
                    .map_err(ProbError::from)?,
                s.epoch,
                s.best_params,
                s.best_epoch,
                s.best_val,
                s.since_best,
            ),
            None => (
                Adam::new(cfg.adam, &model.params.to_vec()),
                0,
                model.params.to_vec(),
                0,
                f64::NEG_INFINITY,
                0,
            ),
        };
    let mut history = Vec::new();
    let mut epoch = start_epoch;
    let stopped = |since: u32, epoch: u32| since >= cfg.patience || epoch >= cfg.max_epochs;

    while !stopped(since_best, epoch) {
        epoch += 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Vec<Tensor>), ProbError>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let pos = (b * cfg.batch_size + k) as u64;
                    let key = seed::derive(seed, Stream::Sampling, (epoch as u64) << 32 | pos);
                    sample_grad(&model, &train[i], cfg, key)
                })
                .collect();
            let mut total: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, what: "loss" });
                }
                loss_sum += loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(t) => {
                        for (a, g) in t.iter_mut().zip(&grads) {
                            a.add_assign(g).map_err(ProbError::from)?;
                        }
                    }
                }
            }
            let mut grads = total.expect("batches are non-empty");
            for g in &mut grads {
                g.scale_assign(1.0 / batch.len() as f64);
                if !g.is_finite() {
                    return Err(TrainError::Diverged { epoch, what: "gradient" });
                }
            }
            let mut params = model.params.to_vec();
            adam.step(&mut params, &grads).map_err(ProbError::from)?;
            if params.iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Diverged { epoch, what: "parameter" });
            }
            model.params.assign(&params).map_err(ProbError::from)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let predictor = ModelPredictor {
            model: &model,
            mode: cfg.mode,
            hyper: cfg.hyper,
            seed,
        };
        let val_mjc = mjc(&predictor, val, cfg.n_out)?;
        let improved = val_mjc > best_val;
        if improved {
            best_val = val_mjc;
            best_epoch = epoch;
            best_params = model.params.to_vec();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_mjc,
            improved,
        };
        history.push(record);
        let snapshot = snapshot(&model, cfg.mode, &adam, epoch, best_epoch, since_best, best_val, &best_params);
        on_epoch(&record, &snapshot);
    }

    let last = snapshot(&model, cfg.mode, &adam, epoch, best_epoch, since_best, best_val, &best_params);
    let mut best = model;
    best.params.assign(&best_params).map_err(ProbError::from)?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val,
        history,
        last,
    })
}

#[allow(clippy::too_many_arguments)]
fn snapshot(
    model: &InsetModel,
    mode: TrainMode,
    adam: &Adam,
    epoch: u32,
    best_epoch: u32,
    since_best: u32,
    best_val: f64,
    best_params: &[Tensor],
) -> Checkpoint {
    Checkpoint {
        model: model.clone(),
        mode,
        state: Some(TrainState {
            epoch,
            adam_step: adam.step_count(),
            best_epoch,
            since_best,
            best_val,
            first_moments: adam.first_moments().to_vec(),
            second_moments: adam.second_moments().to_vec(),
            best_params: best_params.to_vec(),
        }),
    }
}
