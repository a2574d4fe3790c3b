use crate::autodiff::Tape;
use crate::tensor::Tensor;

use super::{InsetModel, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IncrementalError {
    #[error("element {0} is already in the subset")]
    AlreadyMember(usize),
    #[error("element {0} is not in the subset")]
    NotMember(usize),
    #[error("element {index} out of range for ground set of size {n}")]
    OutOfRange { index: usize, n: usize },
    #[error("mask length {got} does not match ground set size {expected}")]
    MaskLength { expected: usize, got: usize },
}

/// Set-function state for one ground set with the encoder already applied.
///
/// The pre-activation of a subset `S` is `Σ_{i∈S} u_i + base`, so adding or
/// removing an element costs `O(h_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyContext {
    u: Tensor,
    base: Vec<f64>,
    weight: Vec<f64>,
    bias: f64,
}

impl EnergyContext {
    pub(super) fn new(model: &InsetModel, features: &Tensor) -> Result<Self, ModelError> {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let x = tape.leaf(features.clone());
        let enc = model.encode(&mut tape, &b, x)?;
        let (u, c) = model.preactivation_parts(&mut tape, &b, enc)?;
        Ok(EnergyContext {
            u: tape.value(u).clone(),
            base: tape.value(c).data().to_vec(),
            weight: model.params.out_head.weight.data().to_vec(),
            bias: model.params.out_head.bias.data()[0],
        })
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    /// Per-element pre-activation contributions, `n × h_d`.
    pub fn contributions(&self) -> &Tensor {
        &self.u
    }

    fn check_mask(&self, mask: &[bool]) -> Result<(), IncrementalError> {
        if mask.len() != self.n() {
            return Err(IncrementalError::MaskLength {
                expected: self.n(),
                got: mask.len(),
            });
        }
        Ok(())
    }

    /// Pre-activation of the subset marked by `mask`, summed in index order.
    pub fn preactivation(&self, mask: &[bool]) -> Vec<f64> {
        let mut pre = vec![0.0; self.base.len()];
        for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
            for (p, u) in pre.iter_mut().zip(self.u.row(i)) {
                *p += u;
            }
        }
        for (p, b) in pre.iter_mut().zip(&self.base) {
            *p += b;
        }
        pre
    }

    pub fn readout(&self, pre: &[f64]) -> f64 {
        pre.iter()
            .zip(&self.weight)
            .map(|(p, w)| w * p.max(0.0))
            .sum::<f64>()
            + self.bias
    }

    pub fn energy(&self, mask: &[bool]) -> Result<f64, IncrementalError> {
        self.check_mask(mask)?;
        Ok(self.readout(&self.preactivation(mask)))
    }

    /// `F(S ∪ {i}) − F(S ∖ {i})` given the pre-activation of `S`.
    pub fn gain_from(&self, pre: &[f64], in_set: bool, i: usize) -> f64 {
        let ui = self.u.row(i);
        let s = if in_set { 1.0 } else { 0.0 };
        let mut acc = 0.0;
        for j in 0..pre.len() {
            let minus = pre[j] - s * ui[j];
            let plus = minus + ui[j];
            acc += self.weight[j] * (plus.max(0.0) - minus.max(0.0));
        }
        acc
    }

    /// Marginal gain of every element with respect to `mask`.
    pub fn gains(&self, mask: &[bool]) -> Result<Vec<f64>, IncrementalError> {
        self.check_mask(mask)?;
        let pre = self.preactivation(mask);
        Ok((0..self.n())
            .map(|i| self.gain_from(&pre, mask[i], i))
            .collect())
    }
}

/// A subset with a cached pre-activation, updated one element at a time.
#[derive(Debug, Clone)]
pub struct IncrementalEnergy<'a> {
    ctx: &'a EnergyContext,
    mask: Vec<bool>,
    pre: Vec<f64>,
}

impl<'a> IncrementalEnergy<'a> {
    pub fn new(ctx: &'a EnergyContext, mask: &[bool]) -> Result<Self, IncrementalError> {
        ctx.check_mask(mask)?;
        Ok(IncrementalEnergy {
            ctx,
            mask: mask.to_vec(),
            pre: ctx.preactivation(mask),
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn energy(&self) -> f64 {
        self.ctx.readout(&self.pre)
    }

    fn check_index(&self, i: usize) -> Result<(), IncrementalError> {
        if i >= self.mask.len() {
            return Err(IncrementalError::OutOfRange {
                index: i,
                n: self.mask.len(),
            });
        }
        Ok(())
    }

    /// Adds `i` and returns the new energy.
    pub fn add(&mut self, i: usize) -> Result<f64, IncrementalError> {
        self.check_index(i)?;
        if self.mask[i] {
            return Err(IncrementalError::AlreadyMember(i));
        }
        self.mask[i] = true;
        for (p, u) in self.pre.iter_mut().zip(self.ctx.u.row(i)) {
            *p += u;
        }
        Ok(self.energy())
    }

    /// Removes `i` and returns the new energy.
    pub fn remove(&mut self, i: usize) -> Result<f64, IncrementalError> {
        self.check_index(i)?;
        if !self.mask[i] {
            return Err(IncrementalError::NotMember(i));
        }
        self.mask[i] = false;
        for (p, u) in self.pre.iter_mut().zip(self.ctx.u.row(i)) {
            *p -= u;
        }
        Ok(self.energy())
    }

    /// `F(S ∪ {i}) − F(S ∖ {i})` without changing the state.
    pub fn gain(&self, i: usize) -> Result<f64, IncrementalError> {
        self.check_index(i)?;
        Ok(self.ctx.gain_from(&self.pre, self.mask[i], i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, ModelVariant};
    use crate::sample::SubsetMask;
    use crate::seed::rng_from;

    fn setup(n: usize, seed: u64) -> (InsetModel, Tensor) {
        let mut rng = rng_from(seed);
        let m = InsetModel::new(ModelVariant::Inset, Dims { d: 2, h: 8, h_d: 6 }, &mut rng);
        let x = Tensor::uniform(n, 2, 2.0, &mut rng);
        (m, x)
    }

    #[test]
    fn add_then_remove_restores_energy() {
        let (m, x) = setup(6, 1);
        let ctx = m.energy_context(&x).unwrap();
        let mask = [true, false, true, false, false, true];
        let mut inc = IncrementalEnergy::new(&ctx, &mask).unwrap();
        let before = inc.energy();
        inc.add(1).unwrap();
        let after = inc.remove(1).unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn add_to_empty_matches_singleton() {
        let (m, x) = setup(5, 2);
        let ctx = m.energy_context(&x).unwrap();
        for i in 0..5 {
            let mut inc = IncrementalEnergy::new(&ctx, &[false; 5]).unwrap();
            let f = inc.add(i).unwrap();
            let direct = m.energy(&x, &SubsetMask::from_indices(5, &[i])).unwrap();
            assert!((f - direct).abs() < 1e-12, "{f} vs {direct}");
        }
    }

    #[test]
    fn invalid_toggles_are_rejected() {
        let (m, x) = setup(3, 3);
        let ctx = m.energy_context(&x).unwrap();
        let mut inc = IncrementalEnergy::new(&ctx, &[true, false, false]).unwrap();
        assert_eq!(inc.add(0), Err(IncrementalError::AlreadyMember(0)));
        assert_eq!(inc.remove(1), Err(IncrementalError::NotMember(1)));
        assert_eq!(inc.add(7), Err(IncrementalError::OutOfRange { index: 7, n: 3 }));
        assert!(IncrementalEnergy::new(&ctx, &[true]).is_err());
    }

    #[test]
    fn add_gains_match_full_recomputation() {
        let (m, x) = setup(8, 4);
        let ctx = m.energy_context(&x).unwrap();
        let base = SubsetMask::from_indices(8, &[1, 4, 6]);
        let inc = IncrementalEnergy::new(&ctx, base.bits()).unwrap();
        for i in 0..8 {
            let mut with = base.clone();
            with.set(i, true);
            let mut without = base.clone();
            without.set(i, false);
            let oracle = m.energy(&x, &with).unwrap() - m.energy(&x, &without).unwrap();
            assert!((inc.gain(i).unwrap() - oracle).abs() < 1e-12);
        }
    }
}
