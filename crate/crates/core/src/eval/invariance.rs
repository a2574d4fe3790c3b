use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{InsetModel, ModelError};
use crate::sample::{SetSample, SubsetMask};
use crate::tensor::Tensor;

use super::EvalError;

/// The two outputs whose symmetry the suite checks.
pub trait SetModel: Sync {
    fn energy(&self, features: &Tensor, mask: &SubsetMask) -> Result<f64, ModelError>;
    fn element_probs(&self, features: &Tensor) -> Result<Vec<f64>, ModelError>;
}

impl SetModel for InsetModel {
    fn energy(&self, features: &Tensor, mask: &SubsetMask) -> Result<f64, ModelError> {
        InsetModel::energy(self, features, mask)
    }

    fn element_probs(&self, features: &Tensor) -> Result<Vec<f64>, ModelError> {
        self.equinet_probs(features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub trials: usize,
    /// Largest `|F(π·V, π·S) − F(V, S)|`.
    pub max_energy_deviation: f64,
    /// Largest `‖π·Y(V) − Y(π·V)‖∞`.
    pub max_equivariance_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Applies `trials` random permutations to randomly chosen samples and
/// measures how far the energy (on `S*` and on a random subset) and the
/// element probabilities move.
pub fn invariance_suite<R: Rng + ?Sized>(
    model: &dyn SetModel,
    samples: &[SetSample],
    trials: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<InvarianceReport, EvalError> {
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut max_e: f64 = 0.0;
    let mut max_y: f64 = 0.0;
    for _ in 0..trials {
        let s = &samples[rng.gen_range(0..samples.len())];
        let n = s.n();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let moved = s.permuted(&perm);
        let random = SubsetMask::from_bools((0..n).map(|_| rng.gen_bool(0.5)).collect());
        for mask in [s.target_mask(), random] {
            let a = model.energy(s.features(), &mask)?;
            let b = model.energy(moved.features(), &mask.permuted(&perm))?;
            max_e = max_e.max((a - b).abs());
        }
        let y = model.element_probs(s.features())?;
        let y_moved = model.element_probs(moved.features())?;
        for i in 0..n {
            max_y = max_y.max((y[i] - y_moved[perm[i]]).abs());
        }
    }
    Ok(InvarianceReport {
        trials,
        max_energy_deviation: max_e,
        max_equivariance_deviation: max_y,
        tolerance,
        passed: max_e <= tolerance && max_y <= tolerance,
    })
}
