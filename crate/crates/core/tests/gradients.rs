mod common;

use rand::Rng;

use common::*;
use inset::autodiff::{Tape, Var};
use inset::gradcheck::finite_diff_check;
use inset::model::{Canonical, ModelVariant};
use inset::prob::{training_loss, LossHyper, SetFunction, TrainMode};
use inset::sample::SubsetMask;
use inset::seed::rng_from;
use inset::tensor::Tensor;

const TOL: f64 = 1e-4;
const INSTANCES: u64 = 100;

/// Reduces any node to a scalar with fixed random weights.
fn to_scalar(tape: &mut Tape, out: Var, weights: &Tensor) -> Var {
    if tape.value(out).shape() == (1, 1) {
        return out;
    }
    let w = tape.leaf(weights.clone());
    let p = tape.mul(out, w).unwrap();
    tape.sum(p)
}

/// Worst finite-difference error of `build` with respect to all `inputs`.
fn check_op(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var, seed: u64) -> f64 {
    let shapes: Vec<(usize, usize)> = inputs.iter().map(|t| t.shape()).collect();
    let unflat = |flat: &[f64]| -> Vec<Tensor> {
        let mut off = 0;
        shapes
            .iter()
            .map(|&(r, c)| {
                let t = Tensor::from_vec(r, c, flat[off..off + r * c].to_vec()).unwrap();
                off += r * c;
                t
            })
            .collect()
    };
    let weights = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let (r, c) = tape.value(out).shape();
        Tensor::uniform(r, c, 1.0, &mut rng_from(seed))
    };
    let eval = |ts: Vec<Tensor>| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ts.into_iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars);
        let s = to_scalar(&mut tape, out, &weights);
        let g = tape.backward(s).unwrap();
        let flat = vars.iter().flat_map(|&v| g.wrt(v).into_data()).collect();
        (tape.value(s).item().unwrap(), flat)
    };
    let point: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    let (_, analytic) = eval(inputs.to_vec());
    finite_diff_check(|x| eval(unflat(x)).0, &analytic, &point, FD_STEP).unwrap()
}

/// Uniform values with magnitude at least 0.05, away from ReLU kinks.
fn away_from_zero<R: Rng>(r: usize, c: usize, rng: &mut R) -> Tensor {
    let mut t = Tensor::uniform(r, c, 2.0, rng);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v = 0.05_f64.copysign(*v) + *v;
        }
    }
    t
}

fn for_instances(name: &str, mut f: impl FnMut(&mut inset::seed::Rng, u64) -> f64) {
    let mut worst = 0.0f64;
    for i in 0..INSTANCES {
        let mut rng = rng_from(1000 + i);
        worst = worst.max(f(&mut rng, i));
    }
    assert!(worst <= TOL, "{name}: worst relative error {worst:e}");
}

fn dims<R: Rng>(rng: &mut R) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

#[test]
fn matmul_and_bias() {
    for_instances("matmul", |rng, i| {
        let (m, k, n) = dims(rng);
        let a = Tensor::uniform(m, k, 1.0, rng);
        let b = Tensor::uniform(k, n, 1.0, rng);
        check_op(&[a, b], &|t, v| t.matmul(v[0], v[1]).unwrap(), i)
    });
    for_instances("add_row_bias", |rng, i| {
        let (m, n, _) = dims(rng);
        let a = Tensor::uniform(m, n, 1.0, rng);
        let b = Tensor::uniform(1, n, 1.0, rng);
        check_op(&[a, b], &|t, v| t.add_row_bias(v[0], v[1]).unwrap(), i)
    });
}

#[test]
fn elementwise_binary() {
    for_instances("add/sub/mul", |rng, i| {
        let (m, n, _) = dims(rng);
        let a = Tensor::uniform(m, n, 1.0, rng);
        let b = Tensor::uniform(m, n, 1.0, rng);
        let e1 = check_op(&[a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]).unwrap(), i);
        let e2 = check_op(&[a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]).unwrap(), i);
        let e3 = check_op(&[a, b], &|t, v| t.mul(v[0], v[1]).unwrap(), i);
        e1.max(e2).max(e3)
    });
}

#[test]
fn elementwise_unary() {
    for_instances("scale/relu/sigmoid", |rng, i| {
        let (m, n, _) = dims(rng);
        let a = away_from_zero(m, n, rng);
        let s = rng.gen_range(-3.0..3.0);
        let e1 = check_op(&[a.clone()], &|t, v| t.scale(v[0], s), i);
        let e2 = check_op(&[a.clone()], &|t, v| t.relu(v[0]), i);
        let e3 = check_op(&[a], &|t, v| t.sigmoid(v[0]), i);
        e1.max(e2).max(e3)
    });
}

#[test]
fn reductions_and_reshapes() {
    for_instances("sum_rows/sum/mean/reshape", |rng, i| {
        let (m, n, _) = dims(rng);
        let a = Tensor::uniform(m, n, 1.0, rng);
        let e1 = check_op(&[a.clone()], &|t, v| t.sum_rows(v[0]), i);
        let e2 = check_op(&[a.clone()], &|t, v| t.sum(v[0]), i);
        let e3 = check_op(&[a.clone()], &|t, v| t.mean(v[0]), i);
        let e4 = check_op(&[a], &|t, v| t.reshape(v[0], n, m).unwrap(), i);
        e1.max(e2).max(e3).max(e4)
    });
    for_instances("logsumexp/pick", |rng, i| {
        let (m, n, _) = dims(rng);
        let col = Tensor::uniform(m, 1, 5.0, rng);
        let a = Tensor::uniform(m, n, 1.0, rng);
        let (r, c) = (rng.gen_range(0..m), rng.gen_range(0..n));
        let e1 = check_op(&[col], &|t, v| t.logsumexp(v[0]).unwrap(), i);
        let e2 = check_op(&[a], &|t, v| t.pick(v[0], r, c).unwrap(), i);
        e1.max(e2)
    });
}

#[test]
fn row_indexing() {
    for_instances("gather_rows/scale_rows", |rng, i| {
        let (m, n, k) = dims(rng);
        let a = Tensor::uniform(m, n, 1.0, rng);
        let index: Vec<usize> = (0..k).map(|_| rng.gen_range(0..m)).collect();
        let scales: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e1 = check_op(&[a.clone()], &|t, v| t.gather_rows(v[0], index.clone()).unwrap(), i);
        let e2 = check_op(&[a], &|t, v| t.scale_rows(v[0], scales.clone()).unwrap(), i);
        e1.max(e2)
    });
}

#[test]
fn losses() {
    for_instances("bce/bce_logits", |rng, i| {
        let n = rng.gen_range(1..6);
        let p = Tensor::from_vec(n, 1, (0..n).map(|_| rng.gen_range(0.05..0.95)).collect()).unwrap();
        let z = Tensor::uniform(n, 1, 4.0, rng);
        let targets: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        let e1 = check_op(&[p], &|t, v| t.bce(v[0], targets.clone()).unwrap(), i);
        let e2 = check_op(&[z], &|t, v| t.bce_logits(v[0], targets.clone()).unwrap(), i);
        e1.max(e2)
    });
}

#[test]
fn toggle_gains_primitive() {
    for_instances("toggle_gains", |rng, i| {
        let n = rng.gen_range(1..6);
        let m = rng.gen_range(1..4);
        let h = rng.gen_range(1..5);
        let u = away_from_zero(n, h, rng);
        let base = away_from_zero(m, h, rng);
        let w = Tensor::uniform(h, 1, 1.0, rng);
        let masks = Tensor::from_vec(
            m,
            n,
            (0..m * n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect(),
        )
        .unwrap();
        check_op(
            &[u, base, w],
            &|t, v| t.toggle_gains(v[0], v[1], v[2], masks.clone()).unwrap(),
            i,
        )
    });
}

#[test]
fn toggle_gains_match_energy_differences() {
    let mut rng = rng_from(5);
    for trial in 0..20 {
        let variant = if trial % 2 == 0 { ModelVariant::Inset } else { ModelVariant::DeepSetsOnly };
        let model = random_model(variant, small_dims(2), trial);
        let n = rng.gen_range(1..8);
        let x = Tensor::uniform(n, 2, 2.0, &mut rng);
        let masks: Vec<Vec<bool>> = (0..3).map(|_| random_bits(n, &mut rng)).collect();
        let drawn = Tensor::from_vec(
            3,
            n,
            masks.iter().flatten().map(|&b| f64::from(u8::from(b))).collect(),
        )
        .unwrap();

        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let enc = model.encode(&mut tape, &b, xv).unwrap();
        let (u, c) = model.preactivation_parts(&mut tape, &b, enc).unwrap();
        let mv = tape.leaf(drawn.clone());
        let base = tape.matmul(mv, u).unwrap();
        let base = tape.add_row_bias(base, c).unwrap();
        let w = b.vars()[6];
        let g = tape.toggle_gains(u, base, w, drawn).unwrap();
        let tape_gains = tape.value(g).data().to_vec();

        let ctx = model.energy_context(&x).unwrap();
        let mut expected = vec![0.0; n];
        for mask in &masks {
            for (e, v) in expected.iter_mut().zip(ctx.marginal_gains(mask)) {
                *e += v / 3.0;
            }
        }
        for (a, e) in tape_gains.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0), "{a} vs {e}");
        }
    }
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let mut rng = rng_from(11);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let variant = if i % 2 == 0 { ModelVariant::Inset } else { ModelVariant::DeepSetsOnly };
        let model = random_model(variant, small_dims(2), 100 + i);
        let s = random_sample(rng.gen_range(1..=6), 2, &mut rng);
        let mask = SubsetMask::from_bools(random_bits(s.n(), &mut rng));
        let canon = Canonical::with_tiebreak(s.features(), mask.bits());
        let xc = canon.features(s.features());
        let members: Vec<usize> = canon
            .to_canonical(mask.bits())
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j)
            .collect();
        let (value, grad) = param_value_and_grad(&model, |tape, b, m| {
            let xv = tape.leaf(xc.clone());
            let enc = m.encode(tape, b, xv).unwrap();
            m.energy_var(tape, b, enc, members.clone()).unwrap()
        });
        assert_eq!(value, model.energy(s.features(), &mask).unwrap());
        let point = model.params.flatten();
        let err = finite_diff_check(
            |p| with_params(&model, p).energy(s.features(), &mask).unwrap(),
            &grad,
            &point,
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

fn loss_value(model: &inset::model::InsetModel, s: &inset::sample::SetSample, mode: TrainMode) -> f64 {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let l = training_loss(&mut tape, &b, model, s, mode, &LossHyper::default(), &mut rng_from(0)).unwrap();
    tape.value(l).item().unwrap()
}

#[test]
fn exact_and_direct_loss_gradients_match_finite_differences() {
    let mut rng = rng_from(12);
    for mode in [TrainMode::Exact, TrainMode::Direct] {
        let mut worst = 0.0f64;
        for i in 0..50 {
            let model = random_model(ModelVariant::Inset, small_dims(2), 200 + i);
            let s = random_sample(rng.gen_range(1..=6), 2, &mut rng);
            let (value, grad) = param_value_and_grad(&model, |tape, b, m| {
                training_loss(tape, b, m, &s, mode, &LossHyper::default(), &mut rng_from(0)).unwrap()
            });
            assert_eq!(value, loss_value(&model, &s, mode));
            let err = finite_diff_check(
                |p| loss_value(&with_params(&model, p), &s, mode),
                &grad,
                &model.params.flatten(),
                FD_STEP,
            )
            .unwrap();
            worst = worst.max(err);
        }
        assert!(worst <= TOL, "{mode:?}: worst relative error {worst:e}");
    }
}

#[test]
fn backward_is_repeatable() {
    let model = random_model(ModelVariant::Inset, small_dims(2), 3);
    let s = random_sample(5, 2, &mut rng_from(4));
    for mode in [TrainMode::Exact, TrainMode::Variational, TrainMode::Direct] {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let l = training_loss(&mut tape, &b, &model, &s, mode, &LossHyper::default(), &mut rng_from(9))
            .unwrap();
        let g1 = tape.backward(l).unwrap();
        let g2 = tape.backward(l).unwrap();
        for &v in b.vars() {
            let (a, c) = (g1.wrt(v), g2.wrt(v));
            assert!(a.data().iter().zip(c.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
