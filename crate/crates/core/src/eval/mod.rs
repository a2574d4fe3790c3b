//! Subset prediction, Jaccard metrics and result reports.

mod invariance;
mod report;

pub use invariance::{invariance_suite, InvarianceReport, SetModel};
pub use report::{render_table, write_metrics_csv, write_timings_csv, MetricsReport, RunResult};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Canonical, InsetModel, ModelError};
use crate::prob::{mfvi, LossHyper, MfviInit, ProbError, TrainMode, VariationalState};
use crate::sample::{SetSample, SubsetMask};
use crate::seed::{self, Stream};
use crate::tensor::Tensor;

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("n_out = {n_out} is outside 1..={len}")]
    NOutRange { n_out: usize, len: usize },
    #[error("cannot evaluate an empty sample list")]
    NoSamples,
    #[error("invariance suite needs at least one trial")]
    NoTrials,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// How many elements a prediction keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NOut {
    /// `|S*|` of the evaluated sample.
    #[default]
    PerSample,
    Fixed(usize),
}

impl NOut {
    pub fn resolve(self, sample: &SetSample) -> usize {
        match self {
            NOut::PerSample => sample.optimal_subset().len(),
            NOut::Fixed(k) => k,
        }
    }

    pub fn label(self) -> String {
        match self {
            NOut::PerSample => "per-sample".to_string(),
            NOut::Fixed(k) => format!("fixed-{k}"),
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`, with `jaccard(∅, ∅) = 1`.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<usize> = a.iter().copied().collect();
    let b: BTreeSet<usize> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Keeps the `n_out` largest entries of `y`; equal values go to the lower index.
pub fn topn_round(y: &[f64], n_out: usize) -> Result<SubsetMask, EvalError> {
    if n_out == 0 || n_out > y.len() {
        return Err(EvalError::NOutRange {
            n_out,
            len: y.len(),
        });
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    Ok(SubsetMask::from_indices(y.len(), &order[..n_out]))
}

/// Anything that scores the elements of a ground set for TopN rounding.
pub trait Predictor: Sync {
    /// One score per element, in storage order; higher means "select".
    fn scores(&self, features: &Tensor) -> Result<Vec<f64>, EvalError>;
}

/// Per-sample generator for predictions: keyed by the run seed and the
/// content of the canonicalized ground set, so it does not depend on the
/// element order or on where the sample sits in a list.
fn content_rng(seed: u64, canonical: &Tensor) -> seed::Rng {
    seed::rng(seed, Stream::Eval, seed::fingerprint(canonical.data()))
}

/// Uniformly random scores; TopN of them is a uniformly random subset.
#[derive(Debug, Clone, Copy)]
pub struct RandomPredictor {
    pub seed: u64,
}

impl Predictor for RandomPredictor {
    fn scores(&self, features: &Tensor) -> Result<Vec<f64>, EvalError> {
        let canon = Canonical::new(features);
        let x = canon.features(features);
        let mut rng = content_rng(self.seed, &x);
        let s: Vec<f64> = (0..x.rows()).map(|_| rng.gen()).collect();
        Ok(canon.to_storage(&s))
    }
}

/// Predictions of a trained model.
///
/// DIRECT models are scored by their EquiNet probabilities. EXACT and
/// VARIATIONAL models run mean-field inference on the learned energy.
/// EXACT training never touches EquiNet, so those runs start from the
/// uniform state instead of an untrained EquiNet.
#[derive(Debug, Clone, Copy)]
pub struct ModelPredictor<'a> {
    pub model: &'a InsetModel,
    pub mode: TrainMode,
    pub hyper: LossHyper,
    pub seed: u64,
}

impl Predictor for ModelPredictor<'_> {
    fn scores(&self, features: &Tensor) -> Result<Vec<f64>, EvalError> {
        self.model.check_features(features)?;
        let canon = Canonical::new(features);
        let x = canon.features(features);
        let y = match self.mode {
            TrainMode::Direct => self.model.equinet_probs_canonical(&x)?,
            TrainMode::Exact | TrainMode::Variational => {
                let init = if self.mode == TrainMode::Exact {
                    MfviInit::Uniform
                } else {
                    self.hyper.init
                };
                let y0 = match init {
                    MfviInit::EquiNet => {
                        VariationalState::new(self.model.equinet_probs_canonical(&x)?)
                    }
                    MfviInit::Uniform => VariationalState::uniform(x.rows()),
                };
                let ctx = self.model.energy_context(&x)?;
                let mut rng = content_rng(self.seed, &x);
                mfvi(
                    &ctx,
                    y0,
                    self.hyper.mfvi_steps,
                    self.hyper.mc_samples,
                    &mut rng,
                )?
                .into_probs()
            }
        };
        Ok(canon.to_storage(&y))
    }
}

pub fn predict(
    predictor: &dyn Predictor,
    sample: &SetSample,
    n_out: NOut,
) -> Result<SubsetMask, EvalError> {
    predict_mask(predictor, sample.features(), n_out.resolve(sample))
}

/// TopN of `predictor`'s scores. Equal scores are ordered by a shuffle of
/// the canonical positions keyed by the ground set's content, so the chosen
/// elements do not depend on the storage order and ties are not biased
/// towards any region of feature space.
pub fn predict_mask(predictor: &dyn Predictor, features: &Tensor, n_out: usize) -> Result<SubsetMask, EvalError> {
    let n = features.rows();
    if n_out == 0 || n_out > n {
        return Err(EvalError::NOutRange { n_out, len: n });
    }
    let canon = Canonical::new(features);
    let scores = canon.to_canonical(&predictor.scores(features)?);
    let x = canon.features(features);
    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut seed::rng(0, Stream::Ties, seed::fingerprint(x.data())));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(priority[a].cmp(&priority[b])));
    Ok(SubsetMask::from_indices(n, &canon.indices_to_storage(&order[..n_out])))
}

/// Jaccard coefficient of every sample's prediction, in input order.
pub fn sample_jaccards(
    predictor: &dyn Predictor,
    samples: &[SetSample],
    n_out: NOut,
) -> Result<Vec<f64>, EvalError> {
    samples
        .par_iter()
        .map(|s| Ok(jaccard(s.optimal_subset(), &predict(predictor, s, n_out)?.indices())))
        .collect()
}

/// Arithmetic mean, summed in ascending value order so that the result
/// does not depend on the order of `values`.
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean Jaccard coefficient of `predictor` over `samples`.
pub fn mjc(predictor: &dyn Predictor, samples: &[SetSample], n_out: NOut) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    Ok(order_free_mean(&sample_jaccards(predictor, samples, n_out)?))
}

/// Single-run report for `predictor` on `samples`.
pub fn evaluate_mjc(
    predictor: &dyn Predictor,
    samples: &[SetSample],
    n_out: NOut,
    task: &str,
    method: &str,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let start = std::time::Instant::now();
    let value = mjc(predictor, samples, n_out)?;
    Ok(MetricsReport::from_runs(
        task,
        method,
        n_out,
        vec![RunResult::ok(seed, value, start.elapsed().as_secs_f64())],
    ))
}
