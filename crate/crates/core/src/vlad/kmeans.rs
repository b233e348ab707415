use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Codebook;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center (lowest index on ties) and its squared distance.
pub(crate) fn nearest(centers: &[f64], d: usize, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks(d).enumerate() {
        let dist = sq_dist(center, point);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn plus_plus_init(samples: &[f64], d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = samples.len() / d;
    let point = |i: usize| &samples[i * d..(i + 1) * d];
    let mut centers = Vec::with_capacity(k * d);
    centers.extend_from_slice(point(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centers[..d])).collect();
    while centers.len() < k * d {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // floating drift can run past the end; fall back to the last
            // point that still has weight
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(point(pick));
        let newest = &centers[start..start + d];
        for (i, slot) in dist.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(point(i), newest));
        }
    }
    centers
}

/// k-means with k-means++ seeding and Lloyd iterations until the assignment
/// stops changing or `max_iter` is reached. `samples` is row-major `n×d`.
pub fn kmeans_fit(
    samples: &[f64],
    d: usize,
    k: usize,
    max_iter: usize,
    seed: u64,
    execution: Execution,
) -> Result<KMeansFit> {
    if d == 0 || k == 0 || !samples.len().is_multiple_of(d) {
        return Err(Error::Config(format!("kmeans_fit with k={k}, d={d}")));
    }
    let n = samples.len() / d;
    if n < k {
        return Err(Error::Precondition(format!(
            "kmeans_fit needs at least k={k} samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("kmeans_fit samples must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(samples, d, k, &mut rng);
    let mut assignment: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        let nearest_all = execution.map_range(n, |i| nearest(&centers, d, &samples[i * d..(i + 1) * d]));
        trace.push(nearest_all.iter().map(|&(_, dist)| dist).sum());
        let changed = nearest_all
            .iter()
            .zip(&assignment)
            .any(|(&(c, _), &prev)| c != prev);
        assignment = nearest_all.iter().map(|&(c, _)| c).collect();
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(&samples[i * d..(i + 1) * d]) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // re-seed at the point farthest from its assigned center
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| nearest_all[a].1.total_cmp(&nearest_all[b].1).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                centers[c * d..(c + 1) * d].copy_from_slice(&samples[far * d..(far + 1) * d]);
            }
        }
    }
    Ok(KMeansFit {
        codebook: Codebook::new(k, d, centers)?,
        objective_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn one_point_per_cluster() {
        let pts = [0.0, 0.0, 5.0, 1.0, -3.0, 2.0, 7.0, 7.0];
        let fit = kmeans_fit(&pts, 2, 4, 20, 3, Execution::Sequential).unwrap();
        assert_eq!(*fit.objective_trace.last().unwrap(), 0.0);
        let mut centers: Vec<Vec<f64>> = fit.codebook.centers().chunks(2).map(<[f64]>::to_vec).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, vec![vec![-3.0, 2.0], vec![0.0, 0.0], vec![5.0, 1.0], vec![7.0, 7.0]]);
    }

    #[test]
    fn two_blobs_recover_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut pts = Vec::new();
        let mut blob_sums = [[0.0; 2]; 2];
        for blob in 0..2 {
            let offset = if blob == 0 { -20.0 } else { 20.0 };
            for _ in 0..50 {
                let p = [offset + noise.sample(&mut rng), noise.sample(&mut rng)];
                blob_sums[blob][0] += p[0];
                blob_sums[blob][1] += p[1];
                pts.extend_from_slice(&p);
            }
        }
        let fit = kmeans_fit(&pts, 2, 2, 50, 1, Execution::Sequential).unwrap();
        assert!(fit.converged);
        let mut centers: Vec<Vec<f64>> = fit.codebook.centers().chunks(2).map(<[f64]>::to_vec).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for blob in 0..2 {
            for j in 0..2 {
                assert!((centers[blob][j] - blob_sums[blob][j] / 50.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let res = kmeans_fit(&[1.0, 2.0], 1, 3, 10, 0, Execution::Sequential);
        assert!(matches!(res, Err(Error::Precondition(_))));
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let pts = vec![1.0; 20];
        let fit = kmeans_fit(&pts, 2, 3, 10, 0, Execution::Sequential).unwrap();
        assert_eq!(fit.codebook.k(), 3);
        assert_eq!(*fit.objective_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = kmeans_fit(&pts, 3, 8, 30, 9, Execution::Sequential).unwrap();
        let b = kmeans_fit(&pts, 3, 8, 30, 9, Execution::Parallel).unwrap();
        assert_eq!(a.codebook, b.codebook);
        assert_eq!(a.objective_trace, b.objective_trace);
    }
}
