use crate::autodiff::logsumexp;
use crate::sample::SubsetMask;

use super::{ProbError, SetFunction, MAX_ENUMERATION};

fn guard(n: usize) -> Result<(), ProbError> {
    if n > MAX_ENUMERATION {
        return Err(ProbError::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    Ok(())
}

/// `F` of every subset, indexed by mask code (bit `i` marks element `i`).
pub fn all_energies(f: &dyn SetFunction) -> Result<Vec<f64>, ProbError> {
    let n = f.ground_size();
    guard(n)?;
    let mut mask = vec![false; n];
    Ok((0u64..1 << n)
        .map(|code| {
            for (i, b) in mask.iter_mut().enumerate() {
                *b = code >> i & 1 == 1;
            }
            f.energy(&mask)
        })
        .collect())
}

/// `log Z = log Σ_{S ⊆ V} exp F(S)`.
pub fn exact_log_partition(f: &dyn SetFunction) -> Result<f64, ProbError> {
    Ok(logsumexp(&all_energies(f)?))
}

/// `log p(target) = F(target) − log Z`.
pub fn exact_log_likelihood(f: &dyn SetFunction, target: &SubsetMask) -> Result<f64, ProbError> {
    let n = f.ground_size();
    guard(n)?;
    if target.len() != n {
        return Err(ProbError::MaskLength {
            expected: n,
            got: target.len(),
        });
    }
    Ok(f.energy(target.bits()) - exact_log_partition(f)?)
}

/// Inclusion probabilities `p(i ∈ S)` under the normalized EBM.
pub fn exact_marginals(f: &dyn SetFunction) -> Result<Vec<f64>, ProbError> {
    let n = f.ground_size();
    let energies = all_energies(f)?;
    let log_z = logsumexp(&energies);
    let mut marginals = vec![0.0; n];
    for (code, e) in energies.iter().enumerate() {
        let p = (e - log_z).exp();
        for (i, m) in marginals.iter_mut().enumerate() {
            if code >> i & 1 == 1 {
                *m += p;
            }
        }
    }
    Ok(marginals)
}
