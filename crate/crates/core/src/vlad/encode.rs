use super::kmeans::nearest;
use super::Codebook;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Norms below this produce the all-zero encoding.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Per-center sums of `frame − nearest center`, flattened to `k·d`.
/// `frames` is row-major `t×d`.
pub fn residual_sums(codebook: &Codebook, frames: &[f64]) -> Result<Vec<f64>> {
    let d = codebook.d();
    if frames.is_empty() || !frames.len().is_multiple_of(d) {
        return Err(Error::dim("vlad_encode", &[frames.len()], &[codebook.k(), d]));
    }
    let centers = codebook.centers();
    let mut sums = vec![0.0; codebook.k() * d];
    for frame in frames.chunks(d) {
        let (c, _) = nearest(centers, d, frame);
        let center = &centers[c * d..(c + 1) * d];
        for ((s, f), m) in sums[c * d..(c + 1) * d].iter_mut().zip(frame).zip(center) {
            *s += f - m;
        }
    }
    Ok(sums)
}

/// Signed square root followed by L2 normalization.
pub fn normalize_residuals(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        *x = x.signum() * x.abs().sqrt();
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM {
        v.fill(0.0);
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// VLAD encoding of one video's frames (`t×d`, row-major).
pub fn vlad_encode(codebook: &Codebook, frames: &[f64]) -> Result<Vec<f64>> {
    Ok(normalize_residuals(residual_sums(codebook, frames)?))
}

/// Encode many videos; output order follows input order.
pub fn vlad_encode_many(codebook: &Codebook, videos: &[Vec<f64>], execution: Execution) -> Result<Vec<Vec<f64>>> {
    execution
        .map(videos, |frames| vlad_encode(codebook, frames))
        .into_iter()
        .collect()
}
