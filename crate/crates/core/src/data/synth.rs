//! Synthetic ground sets with a planted optimal subset.
//!
//! Each sample flips a fair coin `b`, draws `subset_size` points from
//! component `b` as `S*` and the remaining points from component `1 − b`,
//! then shuffles the element order.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::sample::SetSample;
use crate::seed::{self, Stream};
use crate::tensor::Tensor;

use super::DataError;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    GaussianMixture,
    TwoMoons,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::GaussianMixture => "gaussian-mixture",
            SynthKind::TwoMoons => "two-moons",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub samples_total: usize,
    /// `|V|`.
    pub ground_size: usize,
    /// `|S*|`.
    pub subset_size: usize,
    /// Per-coordinate noise variance (two-moons only).
    pub noise_variance: f64,
    /// Component means (Gaussian mixture only).
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// Shared component covariance (Gaussian mixture only).
    pub sigma: Vec<Vec<f64>>,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl SynthConfig {
    pub fn gaussian_mixture() -> Self {
        SynthConfig {
            kind: SynthKind::GaussianMixture,
            samples_total: 1000,
            ground_size: 100,
            subset_size: 10,
            noise_variance: 0.1,
            mu0: vec![-2.0, 0.0],
            mu1: vec![2.0, 0.0],
            sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            split: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }

    pub fn two_moons() -> Self {
        SynthConfig {
            kind: SynthKind::TwoMoons,
            ..Self::gaussian_mixture()
        }
    }

    pub fn for_kind(kind: SynthKind) -> Self {
        match kind {
            SynthKind::GaussianMixture => Self::gaussian_mixture(),
            SynthKind::TwoMoons => Self::two_moons(),
        }
    }

    /// Feature width of generated elements.
    pub fn d(&self) -> usize {
        match self.kind {
            SynthKind::GaussianMixture => self.mu0.len(),
            SynthKind::TwoMoons => 2,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Config(msg));
        if self.samples_total == 0 {
            return bad("samples_total must be at least 1".into());
        }
        if self.subset_size == 0 || self.subset_size >= self.ground_size {
            return bad(format!(
                "subset_size must satisfy 1 <= subset_size < ground_size, got {} and {}",
                self.subset_size, self.ground_size
            ));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return bad(format!(
                "noise_variance must be finite and non-negative, got {}",
                self.noise_variance
            ));
        }
        if self.kind == SynthKind::GaussianMixture {
            let d = self.mu0.len();
            if d == 0 || self.mu1.len() != d {
                return bad("mu0 and mu1 must be non-empty and equally long".into());
            }
            if self.sigma.len() != d || self.sigma.iter().any(|r| r.len() != d) {
                return bad(format!("sigma must be {d}x{d}"));
            }
        }
        Ok(())
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix. The zero
/// matrix is accepted as the point-mass limit and factors to zero.
pub fn cholesky(sigma: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DataError> {
    let d = sigma.len();
    if sigma.iter().all(|r| r.iter().all(|&v| v == 0.0)) {
        return Ok(vec![vec![0.0; d]; d]);
    }
    for i in 0..d {
        for j in 0..i {
            if sigma[i][j] != sigma[j][i] {
                return Err(DataError::Covariance("matrix is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let diag = sigma[i][i] - s;
                if !(diag > 1e-12 * sigma[i][i].abs().max(1.0)) {
                    return Err(DataError::Covariance(
                        "matrix is singular or not positive definite".into(),
                    ));
                }
                l[i][j] = diag.sqrt();
            } else {
                l[i][j] = (sigma[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Point on the noiseless moon `moon ∈ {0, 1}` at angle `t ∈ [0, π]`.
pub fn moon_point(moon: usize, t: f64) -> [f64; 2] {
    if moon == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

/// A generated sample together with the component that supplied `S*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub sample: SetSample,
    pub component: usize,
}

fn assemble<R: Rng + ?Sized>(
    points: Vec<Vec<f64>>,
    subset_size: usize,
    component: usize,
    rng: &mut R,
) -> Labeled {
    let n = points.len();
    let d = points[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // order[p] = which generated point lands at position p
    let mut data = Vec::with_capacity(n * d);
    let mut subset = Vec::with_capacity(subset_size);
    for (pos, &src) in order.iter().enumerate() {
        data.extend_from_slice(&points[src]);
        if src < subset_size {
            subset.push(pos);
        }
    }
    let features = Tensor::from_vec(n, d, data).expect("rows have width d");
    Labeled {
        sample: SetSample::new(features, subset).expect("planted subset is valid"),
        component,
    }
}

pub fn gen_gaussian_mixture_labeled<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<Labeled>, DataError> {
    config.validate()?;
    let chol = cholesky(&config.sigma)?;
    let d = config.d();
    let means = [&config.mu0, &config.mu1];
    let draw = |mean: &[f64], rng: &mut R| -> Vec<f64> {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| mean[i] + (0..=i).map(|k| chol[i][k] * z[k]).sum::<f64>())
            .collect()
    };
    Ok((0..config.samples_total)
        .map(|_| {
            let b = usize::from(rng.gen_bool(0.5));
            let points: Vec<Vec<f64>> = (0..config.ground_size)
                .map(|j| {
                    let comp = if j < config.subset_size { b } else { 1 - b };
                    draw(means[comp], rng)
                })
                .collect();
            assemble(points, config.subset_size, b, rng)
        })
        .collect())
}

pub fn gen_two_moons_labeled<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<Labeled>, DataError> {
    config.validate()?;
    let std = config.noise_variance.sqrt();
    Ok((0..config.samples_total)
        .map(|_| {
            let b = usize::from(rng.gen_bool(0.5));
            let points: Vec<Vec<f64>> = (0..config.ground_size)
                .map(|j| {
                    let moon = if j < config.subset_size { b } else { 1 - b };
                    let t = rng.gen_range(0.0..=PI);
                    let [x, y] = moon_point(moon, t);
                    let nx: f64 = StandardNormal.sample(rng);
                    let ny: f64 = StandardNormal.sample(rng);
                    vec![x + std * nx, y + std * ny]
                })
                .collect();
            assemble(points, config.subset_size, b, rng)
        })
        .collect())
}

pub fn gen_gaussian_mixture<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<SetSample>, DataError> {
    Ok(gen_gaussian_mixture_labeled(config, rng)?
        .into_iter()
        .map(|l| l.sample)
        .collect())
}

pub fn gen_two_moons<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<SetSample>, DataError> {
    Ok(gen_two_moons_labeled(config, rng)?
        .into_iter()
        .map(|l| l.sample)
        .collect())
}

/// Generates the dataset described by `config` from its own seed.
pub fn generate(config: &SynthConfig) -> Result<Vec<SetSample>, DataError> {
    let mut rng = seed::rng(config.seed, Stream::Data, 0);
    match config.kind {
        SynthKind::GaussianMixture => gen_gaussian_mixture(config, &mut rng),
        SynthKind::TwoMoons => gen_two_moons(config, &mut rng),
    }
}
