use rand::seq::SliceRandom;

use crate::sample::SetSample;
use crate::seed::{self, Stream};

use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<SetSample>,
    pub validation: Vec<SetSample>,
    pub test: Vec<SetSample>,
}

/// Partition sizes: `floor(total · rᵢ)` each, then the leftover items go one
/// at a time to the largest fractional parts (lowest index on ties).
pub fn split_sizes(total: usize, ratios: [f64; 3]) -> Result<[usize; 3], DataError> {
    if ratios.iter().any(|&r| !(r >= 0.0)) {
        return Err(DataError::Config(format!(
            "split ratios must be non-negative, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut by_fraction: Vec<usize> = (0..3).collect();
    by_fraction.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut leftover = total.saturating_sub(sizes.iter().sum());
    for &i in by_fraction.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    for (i, name) in ["train", "validation", "test"].into_iter().enumerate() {
        if sizes[i] == 0 {
            return Err(DataError::EmptyPartition {
                partition: name,
                total,
            });
        }
    }
    Ok(sizes)
}

/// Seeded shuffle followed by a contiguous cut into train/validation/test.
pub fn split(samples: &[SetSample], ratios: [f64; 3], seed: u64) -> Result<Split, DataError> {
    let [a, b, _] = split_sizes(samples.len(), ratios)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Split, 0));
    let take = |range: &[usize]| range.iter().map(|&i| samples[i].clone()).collect();
    Ok(Split {
        train: take(&order[..a]),
        validation: take(&order[a..a + b]),
        test: take(&order[a + b..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn samples(k: usize) -> Vec<SetSample> {
        (0..k)
            .map(|i| SetSample::new(Tensor::from_vec(2, 1, vec![i as f64, 0.5]).unwrap(), vec![0]).unwrap())
            .collect()
    }

    #[test]
    fn sizes_follow_floor_then_distribute() {
        assert_eq!(split_sizes(1000, [0.8, 0.1, 0.1]).unwrap(), [800, 100, 100]);
        assert_eq!(split_sizes(10, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(), [4, 3, 3]);
        assert_eq!(split_sizes(7, [0.5, 0.25, 0.25]).unwrap(), [3, 2, 2]);
    }

    #[test]
    fn bad_ratios_and_empty_partitions() {
        assert!(split_sizes(10, [0.5, 0.5, 0.5]).is_err());
        assert!(matches!(
            split_sizes(2, [0.8, 0.1, 0.1]),
            Err(DataError::EmptyPartition { .. })
        ));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let all = samples(50);
        let a = split(&all, [0.6, 0.2, 0.2], 3).unwrap();
        assert_eq!(a, split(&all, [0.6, 0.2, 0.2], 3).unwrap());
        let mut seen: Vec<f64> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .map(|s| s.features().get(0, 0))
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }
}
