use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vidtemporal::exec::Execution;
use vidtemporal::vlad::{
    kmeans_fit, normalize_residuals, residual_sums, vlad_encode, vlad_encode_many, Codebook,
};

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Allow only rounding-level increases between Lloyd iterations.
fn non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12)
}

#[test]
fn objective_never_increases_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..100u64 {
        let d = rng.random_range(1..6);
        let k = rng.random_range(1..9);
        let n = rng.random_range(k..k + 60);
        let samples = gaussian(&mut rng, n * d);
        let fit = kmeans_fit(&samples, d, k, 50, seed, Execution::Sequential).unwrap();
        assert!(non_increasing(&fit.objective_trace), "seed {seed}: {:?}", fit.objective_trace);
    }
}

#[test]
fn kmeans_is_deterministic_and_execution_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = gaussian(&mut rng, 400 * 3);
    let a = kmeans_fit(&samples, 3, 7, 40, 9, Execution::Sequential).unwrap();
    let b = kmeans_fit(&samples, 3, 7, 40, 9, Execution::Parallel).unwrap();
    assert_eq!(a.codebook, b.codebook);
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn encodings_have_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers = gaussian(&mut rng, 5 * 4);
    let cb = Codebook::new(5, 4, centers).unwrap();
    for _ in 0..200 {
        let t = rng.random_range(1..20);
        let enc = vlad_encode(&cb, &gaussian(&mut rng, t * 4)).unwrap();
        assert_eq!(enc.len(), 20);
        assert!((l2(&enc) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn many_matches_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cb = Codebook::new(3, 2, gaussian(&mut rng, 6)).unwrap();
    let videos: Vec<Vec<f64>> = (1..12).map(|t| gaussian(&mut rng, t * 2)).collect();
    let seq = vlad_encode_many(&cb, &videos, Execution::Sequential).unwrap();
    let par = vlad_encode_many(&cb, &videos, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    for (v, e) in videos.iter().zip(&seq) {
        assert_eq!(&vlad_encode(&cb, v).unwrap(), e);
    }
}

proptest! {
    #[test]
    fn scaling_residuals_keeps_encoding(seed in 0u64..5000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = gaussian(&mut rng, 12);
        let a = normalize_residuals(v.clone());
        let b = normalize_residuals(v.iter().map(|x| x * scale).collect());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_ignores_frame_order(seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = Codebook::new(3, 2, gaussian(&mut rng, 6)).unwrap();
        let frames = gaussian(&mut rng, 8 * 2);
        let mut order: Vec<usize> = (0..8).collect();
        for i in (1..8).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<f64> = order.iter().flat_map(|&i| frames[i * 2..i * 2 + 2].to_vec()).collect();
        let a = vlad_encode(&cb, &frames).unwrap();
        let b = vlad_encode(&cb, &shuffled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reflected_frames_negate_residuals(seed in 0u64..5000) {
        // a single center at the origin keeps the assignment fixed under
        // reflection, so residual sums negate exactly
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cb = Codebook::new(1, 3, vec![0.0; 3]).unwrap();
        let frames = gaussian(&mut rng, 5 * 3);
        let reflected: Vec<f64> = frames.iter().map(|x| -x).collect();
        let a = residual_sums(&cb, &frames).unwrap();
        let b = residual_sums(&cb, &reflected).unwrap();
        let (na, nb) = (normalize_residuals(a), normalize_residuals(b));
        for (x, y) in na.iter().zip(&nb) {
            prop_assert_eq!(*x, -*y);
        }
    }
}

#[test]
fn codebook_file_roundtrip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cb = Codebook::new(4, 3, gaussian(&mut rng, 12)).unwrap();
    let (a, b) = (dir.path().join("a.cb"), dir.path().join("b.cb"));
    cb.save(&a).unwrap();
    let back = Codebook::load(&a).unwrap();
    assert_eq!(back, cb);
    back.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let bytes = std::fs::read(&a).unwrap();
    std::fs::write(&b, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(Codebook::load(&b), Err(vidtemporal::Error::Corruption { .. })));
}

#[test]
fn non_finite_centers_rejected() {
    assert!(Codebook::new(1, 2, vec![0.0, f64::NAN]).is_err());
    assert!(Codebook::new(0, 2, vec![]).is_err());
}
