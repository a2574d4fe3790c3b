use rand::Rng;

use crate::autodiff::{sigmoid_scalar, PROB_CLAMP};

use super::{ProbError, SetFunction};

/// Mean-field Bernoulli parameters `Y ∈ (0, 1)ⁿ`, clipped to
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    probs: Vec<f64>,
}

impl VariationalState {
    pub fn new(probs: Vec<f64>) -> Self {
        VariationalState {
            probs: probs
                .into_iter()
                .map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
                .collect(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![0.5; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// Draws `m` subsets from `q(· | Y)`: element `i` of draw `k` is included
/// when the `(k, i)`-th uniform variate falls below `Y_i`. Variates are
/// consumed draw-major, element-minor.
pub fn sample_masks<R: Rng + ?Sized>(probs: &[f64], m: usize, rng: &mut R) -> Vec<Vec<bool>> {
    (0..m)
        .map(|_| probs.iter().map(|&p| rng.gen::<f64>() < p).collect())
        .collect()
}

/// Monte-Carlo estimate of `E_{S∼q}[F(S ∪ {i}) − F(S ∖ {i})]` for every `i`.
pub fn mc_marginal_gains<R: Rng + ?Sized>(
    f: &dyn SetFunction,
    y: &VariationalState,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ProbError> {
    let n = f.ground_size();
    if m == 0 {
        return Err(ProbError::NoSamples);
    }
    if y.len() != n {
        return Err(ProbError::MaskLength {
            expected: n,
            got: y.len(),
        });
    }
    let mut total = vec![0.0; n];
    for mask in sample_masks(y.probs(), m, rng) {
        for (t, g) in total.iter_mut().zip(f.marginal_gains(&mask)) {
            *t += g;
        }
    }
    let inv_m = 1.0 / m as f64;
    Ok(total.into_iter().map(|t| t * inv_m).collect())
}

/// `steps` mean-field updates `Y ← sigmoid(mc_marginal_gains(Y))` from `y0`.
pub fn mfvi<R: Rng + ?Sized>(
    f: &dyn SetFunction,
    y0: VariationalState,
    steps: usize,
    m: usize,
    rng: &mut R,
) -> Result<VariationalState, ProbError> {
    if steps == 0 {
        return Err(ProbError::NoSteps);
    }
    let mut y = y0;
    for _ in 0..steps {
        let gains = mc_marginal_gains(f, &y, m, rng)?;
        y = VariationalState::new(gains.into_iter().map(sigmoid_scalar).collect());
    }
    Ok(y)
}
