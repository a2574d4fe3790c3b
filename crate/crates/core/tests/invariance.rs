mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use inset::autodiff::{pooled_row_sum, Tape};
use inset::eval::invariance_suite;
use inset::model::{InsetModel, ModelVariant};
use inset::prob::{training_loss, LossHyper, MfviInit, TrainMode};
use inset::sample::{SetSample, SubsetMask};
use inset::seed::rng_from;
use inset::tensor::Tensor;

/// Features drawn either continuously or from {-1, 0, 1} so that
/// duplicate rows are common.
fn features<R: Rng>(n: usize, d: usize, coarse: bool, rng: &mut R) -> Tensor {
    if coarse {
        Tensor::from_vec(n, d, (0..n * d).map(|_| f64::from(rng.gen_range(-1i8..=1))).collect()).unwrap()
    } else {
        Tensor::uniform(n, d, 3.0, rng)
    }
}

fn sample_with<R: Rng>(n: usize, d: usize, coarse: bool, rng: &mut R) -> SetSample {
    let x = features(n, d, coarse, rng);
    let k = rng.gen_range(1..=n);
    let idx = random_perm(n, rng).into_iter().take(k).collect();
    SetSample::new(x, idx).unwrap()
}

fn variant(inset: bool) -> ModelVariant {
    if inset {
        ModelVariant::Inset
    } else {
        ModelVariant::DeepSetsOnly
    }
}

fn loss(model: &InsetModel, s: &SetSample, mode: TrainMode, hyper: &LossHyper, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let l = training_loss(&mut tape, &b, model, s, mode, hyper, &mut rng_from(seed)).unwrap();
    tape.value(l).item().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pooling_is_permutation_invariant(seed in any::<u64>(), n in 1usize..20, d in 1usize..5, coarse in any::<bool>()) {
        let mut rng = rng_from(seed);
        let x = features(n, d, coarse, &mut rng);
        let perm = random_perm(n, &mut rng);
        let moved = x.gather_rows(&perm).unwrap();
        let a = pooled_row_sum(&x);
        let b = pooled_row_sum(&moved);
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn energy_is_invariant_and_equinet_equivariant(
        seed in any::<u64>(),
        n in 1usize..16,
        coarse in any::<bool>(),
        inset in any::<bool>(),
    ) {
        let mut rng = rng_from(seed);
        let model = random_model(variant(inset), small_dims(2), seed ^ 1);
        let s = sample_with(n, 2, coarse, &mut rng);
        let perm = random_perm(n, &mut rng);
        let moved = s.permuted(&perm);
        let mask = SubsetMask::from_bools(random_bits(n, &mut rng));
        let a = model.energy(s.features(), &mask).unwrap();
        let b = model.energy(moved.features(), &mask.permuted(&perm)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let y = model.equinet_probs(s.features()).unwrap();
        let ym = model.equinet_probs(moved.features()).unwrap();
        for i in 0..n {
            prop_assert_eq!(y[i].to_bits(), ym[perm[i]].to_bits());
        }
    }

    #[test]
    fn duplicate_rows_get_identical_probabilities(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = rng_from(seed);
        let model = random_model(ModelVariant::Inset, small_dims(2), seed);
        let mut x = Tensor::uniform(n, 2, 2.0, &mut rng);
        let row = x.row(0).to_vec();
        x.row_mut(n - 1).copy_from_slice(&row);
        let y = model.equinet_probs(&x).unwrap();
        prop_assert_eq!(y[0].to_bits(), y[n - 1].to_bits());
    }

    #[test]
    fn loss_is_permutation_invariant_in_every_mode(
        seed in any::<u64>(),
        n in 1usize..9,
        coarse in any::<bool>(),
        uniform_init in any::<bool>(),
    ) {
        let mut rng = rng_from(seed);
        let model = random_model(ModelVariant::Inset, small_dims(2), seed ^ 2);
        let s = sample_with(n, 2, coarse, &mut rng);
        let moved = s.permuted(&random_perm(n, &mut rng));
        let hyper = LossHyper {
            init: if uniform_init { MfviInit::Uniform } else { MfviInit::EquiNet },
            ..LossHyper::default()
        };
        for mode in [TrainMode::Exact, TrainMode::Variational, TrainMode::Direct] {
            let a = loss(&model, &s, mode, &hyper, seed);
            let b = loss(&model, &moved, mode, &hyper, seed);
            prop_assert_eq!(a.to_bits(), b.to_bits(), "{:?}", mode);
        }
    }

    #[test]
    fn deepsets_ignores_elements_outside_the_subset(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = rng_from(seed);
        let model = random_model(ModelVariant::DeepSetsOnly, small_dims(2), seed);
        let s = sample_with(n, 2, false, &mut rng);
        let mask = s.target_mask();
        let mut replaced = s.features().clone();
        for i in 0..n {
            if !mask.contains(i) {
                let fresh = Tensor::uniform(1, 2, 10.0, &mut rng);
                replaced.row_mut(i).copy_from_slice(fresh.data());
            }
        }
        let a = model.energy(s.features(), &mask).unwrap();
        let b = model.energy(&replaced, &mask).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn inset_sees_elements_outside_the_subset() {
    let mut rng = rng_from(77);
    let mut changed = 0;
    for t in 0..100 {
        let model = random_model(ModelVariant::Inset, small_dims(2), 500 + t);
        let n = rng.gen_range(2..12);
        let x = Tensor::uniform(n, 2, 2.0, &mut rng);
        let k = rng.gen_range(1..n);
        let mask = SubsetMask::from_indices(n, &random_perm(n, &mut rng)[..k]);
        let mut replaced = x.clone();
        for i in (0..n).filter(|&i| !mask.contains(i)) {
            replaced.row_mut(i).copy_from_slice(Tensor::uniform(1, 2, 2.0, &mut rng).data());
        }
        if model.energy(&x, &mask).unwrap() != model.energy(&replaced, &mask).unwrap() {
            changed += 1;
        }
    }
    assert!(changed >= 99, "changed in {changed}/100 trials");
}

#[test]
fn suite_reports_zero_deviation_for_random_models() {
    let mut rng = rng_from(3);
    let samples: Vec<SetSample> = (0..20).map(|i| sample_with(3 + i % 9, 2, i % 3 == 0, &mut rng)).collect();
    for v in [ModelVariant::Inset, ModelVariant::DeepSetsOnly] {
        let model = random_model(v, small_dims(2), 8);
        let r = invariance_suite(&model, &samples, 100, 0.0, &mut rng_from(4)).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_energy_deviation, 0.0);
        assert_eq!(r.max_equivariance_deviation, 0.0);
    }
}
