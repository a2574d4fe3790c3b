//! Ground sets, optimal subsets and subset masks.

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("optimal subset index {index} out of range for ground set of size {n}")]
    IndexOutOfBounds { index: usize, n: usize },
    #[error("optimal subset contains index {0} more than once")]
    DuplicateIndex(usize),
    #[error("optimal subset is empty")]
    EmptySubset,
    #[error("ground set is empty")]
    EmptyGroundSet,
}

/// A ground set `V` (one feature row per element) and its optimal subset `S*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSample {
    features: Tensor,
    optimal_subset: Vec<usize>,
}

impl SetSample {
    /// Validates `1 ≤ |S*| ≤ n` and that indices are in range and distinct.
    /// Indices are stored sorted.
    pub fn new(features: Tensor, mut optimal_subset: Vec<usize>) -> Result<Self, SampleError> {
        let n = features.rows();
        if n == 0 {
            return Err(SampleError::EmptyGroundSet);
        }
        if optimal_subset.is_empty() {
            return Err(SampleError::EmptySubset);
        }
        optimal_subset.sort_unstable();
        for w in optimal_subset.windows(2) {
            if w[0] == w[1] {
                return Err(SampleError::DuplicateIndex(w[0]));
            }
        }
        if let Some(&max) = optimal_subset.last() {
            if max >= n {
                return Err(SampleError::IndexOutOfBounds { index: max, n });
            }
        }
        Ok(SetSample {
            features,
            optimal_subset,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn optimal_subset(&self) -> &[usize] {
        &self.optimal_subset
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn target_mask(&self) -> SubsetMask {
        SubsetMask::from_indices(self.n(), &self.optimal_subset)
    }

    /// The same sample with element `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SetSample {
        let n = self.n();
        assert_eq!(perm.len(), n, "permutation length");
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let features = self
            .features
            .gather_rows(&inverse)
            .expect("permutation indices are in range");
        let subset = self.optimal_subset.iter().map(|&i| perm[i]).collect();
        SetSample::new(features, subset).expect("permutation preserves validity")
    }
}

/// Membership bitset over a ground set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask(Vec<bool>);

impl SubsetMask {
    pub fn empty(n: usize) -> Self {
        SubsetMask(vec![false; n])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        SubsetMask(bits)
    }

    /// Panics if an index is out of range.
    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &i in indices {
            bits[i] = true;
        }
        SubsetMask(bits)
    }

    /// Bit `i` of `code` marks element `i`.
    pub fn from_code(n: usize, code: u64) -> Self {
        SubsetMask((0..n).map(|i| code >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn code(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    pub fn permuted(&self, perm: &[usize]) -> SubsetMask {
        let mut bits = vec![false; self.len()];
        for (i, &b) in self.0.iter().enumerate() {
            bits[perm[i]] = b;
        }
        SubsetMask(bits)
    }
}
