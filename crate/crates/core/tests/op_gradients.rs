//! Analytic gradients of every primitive against central differences.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidtemporal::core_math::{Graph, NormMode, Tensor, TimeMask, Var};

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

/// Builds `sum(out ⊙ r)` for fixed random `r`, returns analytic grads and
/// the worst relative error against central differences with `step`.
fn worst_error(inputs: &[Tensor], build: &Build, step: f64, seed: u64) -> f64 {
    let eval = |vals: &[Tensor], want_grads: bool| -> (f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars);
        let shape = g.shape(out).to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = Tensor::uniform(&shape, 1.0, &mut rng);
        let rv = g.constant(r);
        let prod = g.mul(out, rv).unwrap();
        let loss = g.sum(prod);
        let value = g.value(loss).data()[0];
        if !want_grads {
            return (value, vec![]);
        }
        g.backward(loss).unwrap();
        let grads = vars
            .iter()
            .zip(vals)
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (b, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[b].data_mut()[i] += step;
            let mut minus = inputs.to_vec();
            minus[b].data_mut()[i] -= step;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * step);
            let a = analytic[b].data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-9);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

#[test]
fn matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [rand_tensor(&[3, 4], &mut rng), rand_tensor(&[4, 2], &mut rng)];
    let err = worst_error(&inputs, &|g, v| g.matmul(v[0], v[1]).unwrap(), 1e-5, 11);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv1d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = [
        rand_tensor(&[2, 3, 5], &mut rng),
        rand_tensor(&[4, 3, 3], &mut rng),
        rand_tensor(&[4], &mut rng),
    ];
    let err = worst_error(&inputs, &|g, v| g.conv1d_same(v[0], v[1], v[2]).unwrap(), 1e-5, 12);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn batchnorm_train_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask = TimeMask::new(4, vec![4, 3]).unwrap();
    let mut gamma = rand_tensor(&[3], &mut rng);
    gamma.data_mut().iter_mut().for_each(|v| *v += 1.5);
    let inputs = [rand_tensor(&[2, 3, 4], &mut rng), gamma, rand_tensor(&[3], &mut rng)];
    let build = move |g: &mut Graph, v: &[Var]| {
        g.batchnorm_time(v[0], &mask, v[1], v[2], NormMode::Train).unwrap().0
    };
    let err = worst_error(&inputs, &build, 1e-5, 13);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn batchnorm_eval_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mask = TimeMask::new(3, vec![2, 3]).unwrap();
    let mut running = vidtemporal::core_math::RunningStats::new(2);
    running.mean = vec![0.2, -0.1];
    running.var = vec![0.7, 1.3];
    running.updates = 5;
    let inputs = [rand_tensor(&[2, 2, 3], &mut rng), rand_tensor(&[2], &mut rng), rand_tensor(&[2], &mut rng)];
    let build = move |g: &mut Graph, v: &[Var]| {
        g.batchnorm_time(v[0], &mask, v[1], v[2], NormMode::Eval(&running)).unwrap().0
    };
    assert!(worst_error(&inputs, &build, 1e-5, 14) < 1e-6);
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = [rand_tensor(&[3, 4], &mut rng)];
    assert!(worst_error(&x, &|g, v| g.tanh(v[0]), 1e-5, 1) < 1e-8);
    assert!(worst_error(&x, &|g, v| g.sigmoid(v[0]), 1e-5, 2) < 1e-8);
    // keep relu inputs away from the kink
    let mut shifted = x[0].clone();
    shifted.data_mut().iter_mut().for_each(|v| *v += v.signum() * 0.1);
    assert!(worst_error(&[shifted], &|g, v| g.relu(v[0]), 1e-5, 3) < 1e-8);
}

#[test]
fn masked_sequence_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mask = TimeMask::new(5, vec![5, 2, 3]).unwrap();
    let m = mask.clone();
    let scores = [rand_tensor(&[3, 5], &mut rng)];
    assert!(worst_error(&scores, &move |g, v| g.softmax_masked(v[0], &m).unwrap(), 1e-5, 4) < 1e-7);
    let m = mask.clone();
    let x = [rand_tensor(&[3, 2, 5], &mut rng)];
    assert!(worst_error(&x, &move |g, v| g.masked_mean_time(v[0], &m).unwrap(), 1e-5, 5) < 1e-8);
    let m = mask.clone();
    assert!(worst_error(&x, &move |g, v| g.mask_time(v[0], &m).unwrap(), 1e-5, 6) < 1e-8);
    let hw = [rand_tensor(&[3, 2, 5], &mut rng), rand_tensor(&[3, 5], &mut rng)];
    assert!(worst_error(&hw, &|g, v| g.weighted_time_sum(v[0], v[1]).unwrap(), 1e-5, 7) < 1e-8);
}

#[test]
fn shape_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let parts = [
        rand_tensor(&[2, 3, 4], &mut rng),
        rand_tensor(&[2, 1, 4], &mut rng),
        rand_tensor(&[2, 2, 4], &mut rng),
    ];
    assert!(worst_error(&parts, &|g, v| g.concat_channels(v).unwrap(), 1e-5, 8) < 1e-8);

    let x = [rand_tensor(&[2, 3, 4], &mut rng)];
    let build = |g: &mut Graph, v: &[Var]| {
        let rows = g.to_rows(v[0]).unwrap();
        let steps: Vec<Var> = (0..4).rev().map(|t| g.time_rows(rows, t, 4).unwrap()).collect();
        let stacked = g.stack_time(&steps).unwrap();
        let back = g.to_rows(stacked).unwrap();
        let cols = g.slice_cols(back, 1, 2).unwrap();
        let masked = g.mask_rows(cols, vec![true, false, true, true, false, true, true, true]).unwrap();
        g.from_rows(masked, 2, 4).unwrap()
    };
    assert!(worst_error(&x, &build, 1e-5, 9) < 1e-8);

    let ab = [rand_tensor(&[3, 2], &mut rng), rand_tensor(&[2], &mut rng), rand_tensor(&[3, 2], &mut rng)];
    let build = |g: &mut Graph, v: &[Var]| {
        let s = g.add_bias(v[0], v[1]).unwrap();
        let d = g.sub(s, v[2]).unwrap();
        let p = g.mul(d, v[0]).unwrap();
        let q = g.add(p, v[2]).unwrap();
        g.scale(q, -0.7)
    };
    assert!(worst_error(&ab, &build, 1e-5, 10) < 1e-8);
}

#[test]
fn bce_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p: Vec<f64> = (0..12).map(|_| rng.random_range(0.05..0.95)).collect();
    let y: Vec<f64> = (0..12).map(|i| f64::from(i % 3 == 0)).collect();
    let targets = Tensor::new(&[3, 4], y).unwrap();
    let build = move |g: &mut Graph, v: &[Var]| g.bce(v[0], &targets).unwrap();
    let err = worst_error(&[Tensor::new(&[3, 4], p).unwrap()], &build, 1e-6, 15);
    assert!(err < 1e-6, "{err}");
}

fn padded(x: &Tensor, extra: usize, fill: f64) -> Tensor {
    let s = x.shape();
    let (b, c, t) = (s[0], s[1], s[2]);
    let mut out = Vec::with_capacity(b * c * (t + extra));
    for row in x.data().chunks(t) {
        out.extend_from_slice(row);
        out.extend(std::iter::repeat_n(fill, extra));
    }
    Tensor::new(&[b, c, t + extra], out).unwrap()
}

proptest! {
    #[test]
    fn softmax_masked_is_a_distribution(
        scores in prop::collection::vec(-30.0f64..30.0, 12),
        lens in prop::collection::vec(1usize..=4, 3),
    ) {
        let mask = TimeMask::new(4, lens.clone()).unwrap();
        let mut g = Graph::new();
        let s = g.constant(Tensor::new(&[3, 4], scores).unwrap());
        let w = g.softmax_masked(s, &mask).unwrap();
        for (i, row) in g.value(w).data().chunks(4).enumerate() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row[lens[i]..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn conv_preserves_time_length(time in 1usize..12, half in 0usize..3, seed in 0u64..1000) {
        let width = 2 * half + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(&[2, 3, time], 1.0, &mut rng));
        let k = g.constant(Tensor::uniform(&[2, 3, width], 1.0, &mut rng));
        let b = g.constant(Tensor::zeros(&[2]));
        let y = g.conv1d_same(x, k, b).unwrap();
        prop_assert_eq!(g.shape(y), &[2, 2, time]);
    }

    #[test]
    fn masked_ops_ignore_padding(seed in 0u64..1000, extra in 1usize..4, fill in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lens = vec![rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = Tensor::uniform(&[2, 3, 4], 1.0, &mut rng);
        let scores = Tensor::uniform(&[2, 4], 1.0, &mut rng);
        let gamma = Tensor::uniform(&[3], 1.0, &mut rng);
        let beta = Tensor::uniform(&[3], 1.0, &mut rng);
        // junk at padded positions of the short tensor as well
        let mut x_junk = x.clone();
        for (i, &len) in lens.iter().enumerate() {
            for c in 0..3 {
                for t in len..4 {
                    x_junk.data_mut()[(i * 3 + c) * 4 + t] = fill;
                }
            }
        }
        let run = |x: &Tensor, s: &Tensor, mask: &TimeMask| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let sv = g.constant(s.clone());
            let gv = g.constant(gamma.clone());
            let bv = g.constant(beta.clone());
            let mean = g.masked_mean_time(xv, mask).unwrap();
            let w = g.softmax_masked(sv, mask).unwrap();
            let (bn, _) = g.batchnorm_time(xv, mask, gv, bv, NormMode::Train).unwrap();
            let pooled = g.weighted_time_sum(bn, w).unwrap();
            (g.value(mean).clone(), g.value(pooled).clone())
        };
        let mask = TimeMask::new(4, lens.clone()).unwrap();
        let base = run(&x, &scores, &mask);
        let junk = run(&x_junk, &scores, &mask);
        prop_assert_eq!(&base, &junk);

        let long_mask = mask.with_max_time(4 + extra).unwrap();
        let long_scores = padded(&scores.clone().reshape(&[2, 1, 4]).unwrap(), extra, fill)
            .reshape(&[2, 4 + extra]).unwrap();
        let long = run(&padded(&x_junk, extra, fill), &long_scores, &long_mask);
        prop_assert_eq!(&base, &long);
    }
}
