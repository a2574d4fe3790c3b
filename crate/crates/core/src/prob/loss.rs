//! Per-sample training objectives recorded on a tape.
//!
//! All three modes canonicalize the sample first (rows sorted, ties broken
//! by target membership), so the loss is exactly invariant to the storage
//! order of the ground set, including the Monte-Carlo draws of the
//! variational mode.

use rand::Rng;

use crate::autodiff::{sigmoid_scalar, Tape, Var};
use crate::model::{BoundParams, Canonical, InsetModel};
use crate::sample::{SetSample, SubsetMask};
use crate::tensor::Tensor;

use super::variational::{sample_masks, VariationalState};
use super::{ProbError, MAX_ENUMERATION};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Maximum likelihood under the enumerated EBM.
    Exact,
    /// Cross-entropy of unrolled mean-field iterations against `S*`.
    Variational,
    /// Cross-entropy of EquiNet probabilities against `S*`.
    Direct,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Exact => "exact",
            TrainMode::Variational => "variational",
            TrainMode::Direct => "direct",
        }
    }
}

/// Starting point of the mean-field iterations.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum MfviInit {
    #[serde(rename = "equinet")]
    #[value(name = "equinet")]
    EquiNet,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossHyper {
    /// Monte-Carlo subsets per mean-field step.
    pub mc_samples: usize,
    /// Mean-field iterations.
    pub mfvi_steps: usize,
    pub init: MfviInit,
}

impl Default for LossHyper {
    fn default() -> Self {
        LossHyper {
            mc_samples: 5,
            mfvi_steps: 5,
            init: MfviInit::EquiNet,
        }
    }
}

/// All `2ⁿ` masks as rows of an `2ⁿ × n` indicator matrix, by mask code.
pub(crate) fn all_masks_matrix(n: usize) -> Tensor {
    let rows = 1usize << n;
    let mut t = Tensor::zeros(rows, n);
    for code in 0..rows {
        for i in 0..n {
            if code >> i & 1 == 1 {
                t.set(code, i, 1.0);
            }
        }
    }
    t
}

pub(crate) fn masks_tensor(masks: &[Vec<bool>], n: usize) -> Tensor {
    let data = masks
        .iter()
        .flat_map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    Tensor::from_vec(masks.len(), n, data).expect("masks have length n")
}

/// Records the loss of `sample` under `mode` and returns its node.
///
/// `params` must come from `model.bind(tape)`. In variational mode the
/// sampled subsets are constants: gradients reach the parameters only
/// through the energy evaluations of the final mean-field step.
pub fn training_loss<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &BoundParams,
    model: &InsetModel,
    sample: &SetSample,
    mode: TrainMode,
    hyper: &LossHyper,
    rng: &mut R,
) -> Result<Var, ProbError> {
    model.check_features(sample.features())?;
    let n = sample.n();
    if mode == TrainMode::Exact && n > MAX_ENUMERATION {
        return Err(ProbError::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    let target = sample.target_mask();
    let canon = Canonical::with_tiebreak(sample.features(), target.bits());
    let target_c = SubsetMask::from_bools(canon.to_canonical(target.bits()));
    let targets: Vec<f64> = target_c
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let x = tape.leaf(canon.features(sample.features()));
    let enc = model.encode(tape, params, x)?;

    match mode {
        TrainMode::Direct => {
            let logits = model.equinet_logits_var(tape, params, enc)?;
            Ok(tape.bce_logits(logits, targets)?)
        }
        TrainMode::Exact => {
            let (u, c) = model.preactivation_parts(tape, params, enc)?;
            let masks = tape.leaf(all_masks_matrix(n));
            let pre = tape.matmul(masks, u)?;
            let pre = tape.add_row_bias(pre, c)?;
            let hidden = tape.relu(pre);
            let energies = model.readout_var(tape, params, hidden)?;
            let log_z = tape.logsumexp(energies)?;
            let f_target = tape.pick(energies, target_c.code() as usize, 0)?;
            Ok(tape.sub(log_z, f_target)?)
        }
        TrainMode::Variational => {
            if hyper.mc_samples == 0 {
                return Err(ProbError::NoSamples);
            }
            if hyper.mfvi_steps == 0 {
                return Err(ProbError::NoSteps);
            }
            let mut y = match hyper.init {
                MfviInit::EquiNet => {
                    let logits = model.equinet_logits_var(tape, params, enc)?;
                    let probs = tape.value(logits).data().iter().map(|&z| sigmoid_scalar(z));
                    VariationalState::new(probs.collect())
                }
                MfviInit::Uniform => VariationalState::uniform(n),
            };
            let (u, c) = model.preactivation_parts(tape, params, enc)?;
            let w = params.out_weight();
            let mut gains = None;
            for _ in 0..hyper.mfvi_steps {
                let drawn = masks_tensor(&sample_masks(y.probs(), hyper.mc_samples, rng), n);
                let mv = tape.leaf(drawn.clone());
                let base = tape.matmul(mv, u)?;
                let base = tape.add_row_bias(base, c)?;
                let g = tape.toggle_gains(u, base, w, drawn)?;
                y = VariationalState::new(
                    tape.value(g).data().iter().map(|&v| sigmoid_scalar(v)).collect(),
                );
                gains = Some(g);
            }
            let gains = gains.expect("at least one mean-field step");
            Ok(tape.bce_logits(gains, targets)?)
        }
    }
}
