//! Energy-based distributions over subsets and their approximations.
//!
//! `p(S | V) = exp(F(S; V)) / Z` with `Z = Σ_{S' ⊆ V} exp(F(S'; V))`.
//! Exact routines enumerate all `2ⁿ` subsets and are capped at
//! [`MAX_ENUMERATION`] elements; the mean-field routines approximate `p`
//! by independent Bernoulli factors `q(S) = Π_{i∈S} Y_i Π_{i∉S} (1 − Y_i)`.

pub mod exact;
pub mod loss;
pub mod variational;

pub use exact::{exact_log_likelihood, exact_log_partition, exact_marginals};
pub use loss::{training_loss, LossHyper, MfviInit, TrainMode};
pub use variational::{mc_marginal_gains, mfvi, sample_masks, VariationalState};

use crate::model::EnergyContext;

/// Largest ground set accepted by exact enumeration.
pub const MAX_ENUMERATION: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error(
        "exact enumeration over {n} elements exceeds the limit of {max}; use variational mode"
    )]
    TooLarge { n: usize, max: usize },
    #[error("mask length {got} does not match ground set size {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("mean-field iteration count must be at least 1")]
    NoSteps,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Shape(#[from] crate::tensor::ShapeError),
}

/// A scalar set function `F(S; V)` over a fixed ground set.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;

    /// `F` of the subset marked by `mask`; `mask.len()` equals `ground_size()`.
    fn energy(&self, mask: &[bool]) -> f64;

    /// `F(S ∪ {i}) − F(S ∖ {i})` for every element `i`.
    fn marginal_gains(&self, mask: &[bool]) -> Vec<f64> {
        let mut scratch = mask.to_vec();
        (0..mask.len())
            .map(|i| {
                scratch[i] = true;
                let with = self.energy(&scratch);
                scratch[i] = false;
                let without = self.energy(&scratch);
                scratch[i] = mask[i];
                with - without
            })
            .collect()
    }
}

impl SetFunction for EnergyContext {
    fn ground_size(&self) -> usize {
        self.n()
    }

    fn energy(&self, mask: &[bool]) -> f64 {
        self.readout(&self.preactivation(mask))
    }

    fn marginal_gains(&self, mask: &[bool]) -> Vec<f64> {
        let pre = self.preactivation(mask);
        (0..self.n())
            .map(|i| self.gain_from(&pre, mask[i], i))
            .collect()
    }
}

/// `F(S) = bias + Σ_{i∈S} w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modular {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SetFunction for Modular {
    fn ground_size(&self) -> usize {
        self.weights.len()
    }

    fn energy(&self, mask: &[bool]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(mask)
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum::<f64>()
    }

    fn marginal_gains(&self, _mask: &[bool]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// `F(S) = c` for every subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub n: usize,
    pub value: f64,
}

impl SetFunction for Constant {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn energy(&self, _mask: &[bool]) -> f64 {
        self.value
    }

    fn marginal_gains(&self, _mask: &[bool]) -> Vec<f64> {
        vec![0.0; self.n]
    }
}

/// Wraps a closure as a [`SetFunction`].
pub struct FnSet<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[bool]) -> f64 + Sync> SetFunction for FnSet<F> {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn energy(&self, mask: &[bool]) -> f64 {
        (self.f)(mask)
    }
}
