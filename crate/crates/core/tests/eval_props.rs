mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::*;
use inset::config::ExperimentConfig;
use inset::data::SynthConfig;
use inset::eval::{mjc, sample_jaccards, write_metrics_csv, ModelPredictor, NOut, Predictor, RandomPredictor};
use inset::experiment::run_experiment;
use inset::model::ModelVariant;
use inset::prob::{LossHyper, TrainMode};
use inset::sample::SetSample;
use inset::seed::rng_from;

fn samples(seed: u64, count: usize) -> Vec<SetSample> {
    let mut rng = rng_from(seed);
    (0..count).map(|i| random_sample(2 + i % 9, 2, &mut rng)).collect()
}

fn check_relabel(p: &dyn Predictor, s: &[SetSample], seed: u64) -> Result<(), TestCaseError> {
    let mut rng = rng_from(seed);
    let moved: Vec<SetSample> = s.iter().map(|x| x.permuted(&random_perm(x.n(), &mut rng))).collect();
    for n_out in [NOut::PerSample, NOut::Fixed(2)] {
        let a = sample_jaccards(p, s, n_out).unwrap();
        let b = sample_jaccards(p, &moved, n_out).unwrap();
        prop_assert_eq!(a, b);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mjc_is_invariant_under_relabeling(seed in any::<u64>()) {
        let s = samples(seed, 12);
        check_relabel(&RandomPredictor { seed }, &s, seed ^ 1)?;
        let model = random_model(ModelVariant::Inset, small_dims(2), seed);
        for mode in [TrainMode::Exact, TrainMode::Variational, TrainMode::Direct] {
            let p = ModelPredictor { model: &model, mode, hyper: LossHyper::default(), seed };
            check_relabel(&p, &s, seed ^ 2)?;
        }
    }

    #[test]
    fn mjc_does_not_depend_on_sample_order(seed in any::<u64>()) {
        let s = samples(seed, 20);
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut rng_from(seed));
        let model = random_model(ModelVariant::Inset, small_dims(2), seed);
        let p = ModelPredictor { model: &model, mode: TrainMode::Variational, hyper: LossHyper::default(), seed };
        let a = mjc(&p, &s, NOut::PerSample).unwrap();
        let b = mjc(&p, &shuffled, NOut::PerSample).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let r = RandomPredictor { seed };
        prop_assert_eq!(
            mjc(&r, &s, NOut::PerSample).unwrap().to_bits(),
            mjc(&r, &shuffled, NOut::PerSample).unwrap().to_bits()
        );
    }
}

#[test]
fn experiments_are_reproducible() {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = inset::config::DatasetSection::from_synth(&SynthConfig {
        samples_total: 40,
        ground_size: 12,
        subset_size: 3,
        ..SynthConfig::gaussian_mixture()
    });
    cfg.model.h = 8;
    cfg.model.h_d = 8;
    cfg.training.lr = 1e-2;
    cfg.training.max_epochs = 3;
    cfg.training.seeds = vec![0, 1, 2];
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.values().len(), 3);
    assert_eq!(a.values(), b.values());
    assert_eq!(a.mean.map(f64::to_bits), b.mean.map(f64::to_bits));
    let csv = |r| {
        let mut out = Vec::new();
        write_metrics_csv(&[r], &mut out).unwrap();
        out
    };
    assert_eq!(csv(a), csv(b));
}

#[test]
fn random_predictor_is_near_the_chance_level() {
    let s = inset::data::generate(&SynthConfig::gaussian_mixture()).unwrap();
    let v = mjc(&RandomPredictor { seed: 0 }, &s, NOut::PerSample).unwrap();
    // Expected Jaccard of a random 10-subset of 100 against a fixed 10-subset.
    let expected = {
        let (n, k) = (100u64, 10u64);
        let choose = |a: u64, b: u64| -> f64 { (0..b).map(|i| (a - i) as f64 / (i + 1) as f64).product() };
        (0..=k)
            .map(|j| choose(k, j) * choose(n - k, k - j) / choose(n, k) * j as f64 / (2 * k - j) as f64)
            .sum::<f64>()
    };
    assert!((v - expected).abs() < 0.01, "{v} vs {expected}");
}
