#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use inset::autodiff::{Tape, Var};
use inset::model::{BoundParams, Dims, InsetModel, ModelVariant};
use inset::sample::SetSample;
use inset::seed::rng_from;
use inset::tensor::Tensor;

pub const FD_STEP: f64 = 1e-6;

pub fn small_dims(d: usize) -> Dims {
    Dims { d, h: 6, h_d: 8 }
}

pub fn random_model(variant: ModelVariant, dims: Dims, seed: u64) -> InsetModel {
    InsetModel::new(variant, dims, &mut rng_from(seed))
}

/// A sample with `n` uniform feature rows in `[-2, 2]` and a random
/// non-empty optimal subset.
pub fn random_sample<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> SetSample {
    let features = Tensor::uniform(n, d, 2.0, rng);
    let k = rng.gen_range(1..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    SetSample::new(features, idx).unwrap()
}

pub fn random_perm<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

/// Value and flattened parameter gradient of the scalar built by `build`.
pub fn param_value_and_grad(
    model: &InsetModel,
    build: impl Fn(&mut Tape, &BoundParams, &InsetModel) -> Var,
) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let out = build(&mut tape, &b, model);
    let value = tape.value(out).item().unwrap();
    let grads = tape.backward(out).unwrap();
    let flat = b
        .vars()
        .iter()
        .flat_map(|&v| grads.wrt(v).into_data())
        .collect();
    (value, flat)
}

/// `model` with its parameters replaced by `flat`.
pub fn with_params(model: &InsetModel, flat: &[f64]) -> InsetModel {
    let mut m = model.clone();
    m.params.unflatten(flat);
    m
}

/// Scales the output head so that `max_S |F(S)| = bound` on `features`.
pub fn with_energy_bound(model: &InsetModel, features: &Tensor, bound: f64) -> InsetModel {
    let n = features.rows();
    let peak = (0u64..1 << n)
        .map(|code| {
            let mask = inset::sample::SubsetMask::from_code(n, code);
            model.energy(features, &mask).unwrap().abs()
        })
        .fold(0.0f64, f64::max);
    let mut m = model.clone();
    let c = bound / peak;
    m.params.out_head.weight.scale_assign(c);
    m.params.out_head.bias.scale_assign(c);
    m
}

/// `E_{S∼q(·|y)}[F(S ∪ {i}) − F(S ∖ {i})]` by enumerating every subset,
/// using only `energy`.
pub fn enumerated_gains(energy: &dyn Fn(&[bool]) -> f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    for code in 0u64..1 << n {
        let mask: Vec<bool> = (0..n).map(|i| code >> i & 1 == 1).collect();
        let q: f64 = (0..n).map(|i| if mask[i] { y[i] } else { 1.0 - y[i] }).product();
        for (i, o) in out.iter_mut().enumerate() {
            let mut with = mask.clone();
            with[i] = true;
            let mut without = mask.clone();
            without[i] = false;
            *o += q * (energy(&with) - energy(&without));
        }
    }
    out
}
