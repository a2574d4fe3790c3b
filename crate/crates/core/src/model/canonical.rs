use std::cmp::Ordering;

use crate::tensor::Tensor;

/// A canonical ordering of the elements of a ground set.
///
/// Elements are sorted lexicographically by feature row, then by an
/// optional per-element flag. Any two storage orders of the same set map
/// to the same canonical sequence, so computations run in canonical order
/// are exactly invariant to the original order. Elements that tie on both
/// keys are indistinguishable, so their relative order cannot matter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    /// `order[j]` is the storage index of the `j`-th canonical element.
    order: Vec<usize>,
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl Canonical {
    pub fn new(features: &Tensor) -> Self {
        Self::build(features, None)
    }

    pub fn with_tiebreak(features: &Tensor, flags: &[bool]) -> Self {
        Self::build(features, Some(flags))
    }

    fn build(features: &Tensor, flags: Option<&[bool]>) -> Self {
        let mut order: Vec<usize> = (0..features.rows()).collect();
        order.sort_by(|&a, &b| {
            cmp_rows(features.row(a), features.row(b))
                .then_with(|| flags.map_or(Ordering::Equal, |f| f[a].cmp(&f[b])))
        });
        Canonical { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn features(&self, features: &Tensor) -> Tensor {
        features
            .gather_rows(&self.order)
            .expect("canonical order indexes existing rows")
    }

    /// Reindexes a per-element vector from storage to canonical order.
    pub fn to_canonical<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.order.iter().map(|&i| values[i]).collect()
    }

    /// Reindexes a per-element vector from canonical to storage order.
    pub fn to_storage<T: Copy + Default>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); values.len()];
        for (j, &i) in self.order.iter().enumerate() {
            out[i] = values[j];
        }
        out
    }

    /// Maps canonical indices to storage indices.
    pub fn indices_to_storage(&self, canonical: &[usize]) -> Vec<usize> {
        canonical.iter().map(|&j| self.order[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permuted_inputs_share_a_canonical_form() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 5.0], vec![1.0, -2.0]]).unwrap();
        let c = Canonical::new(&x);
        assert_eq!(c.order(), &[1, 2, 0]);
        let y = x.gather_rows(&[2, 0, 1]).unwrap();
        assert_eq!(c.features(&x), Canonical::new(&y).features(&y));
        let v = [10, 20, 30];
        assert_eq!(c.to_storage(&c.to_canonical(&v)), v.to_vec());
    }

    #[test]
    fn flags_break_feature_ties() {
        let x = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(Canonical::with_tiebreak(&x, &[true, false]).order(), &[1, 0]);
        assert_eq!(Canonical::with_tiebreak(&x, &[false, true]).order(), &[0, 1]);
    }
}
