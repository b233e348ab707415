//! Per-channel batch normalization over the valid frames of a padded
//! `[batch×channels×time]` tensor.

use super::graph::Op;
use super::{Graph, Tensor, TimeMask, Var};
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Running mean/variance per channel, updated as
/// `running = 0.9·running + 0.1·batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub updates: u64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            updates: 0,
        }
    }

    pub fn is_populated(&self) -> bool {
        self.updates > 0
    }

    pub fn update(&mut self, batch: &BatchStats) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        self.updates += 1;
    }
}

/// Statistics of one training batch (biased variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum NormMode<'a> {
    Train,
    Eval(&'a RunningStats),
}

#[derive(Debug)]
pub(crate) struct BatchNormCache {
    pub(crate) x: Var,
    pub(crate) gamma: Var,
    pub(crate) beta: Var,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    lengths: Vec<usize>,
    train: bool,
}

pub(crate) struct NormGrads {
    pub(crate) x: Tensor,
    pub(crate) gamma: Tensor,
    pub(crate) beta: Tensor,
}

pub(crate) fn backward(cache: &BatchNormCache, gamma: &Tensor, g: &Tensor) -> NormGrads {
    let s = g.shape();
    let (c, time) = (s[1], s[2]);
    let total: usize = cache.lengths.iter().sum();
    let mut g_gamma = vec![0.0; c];
    let mut g_beta = vec![0.0; c];
    for (i, &len) in cache.lengths.iter().enumerate() {
        for j in 0..c {
            let base = (i * c + j) * time;
            for t in 0..len {
                g_beta[j] += g.data()[base + t];
                g_gamma[j] += g.data()[base + t] * cache.xhat[base + t];
            }
        }
    }
    let mut g_x = vec![0.0; g.len()];
    let n = total as f64;
    for (i, &len) in cache.lengths.iter().enumerate() {
        for j in 0..c {
            let base = (i * c + j) * time;
            let k = gamma.data()[j] * cache.inv_std[j];
            for t in 0..len {
                let gv = g.data()[base + t];
                g_x[base + t] = if cache.train {
                    k / n * (n * gv - g_beta[j] - cache.xhat[base + t] * g_gamma[j])
                } else {
                    k * gv
                };
            }
        }
    }
    NormGrads {
        x: Tensor::from_parts(s.to_vec(), g_x),
        gamma: Tensor::from_parts(vec![c], g_gamma),
        beta: Tensor::from_parts(vec![c], g_beta),
    }
}

impl Graph {
    /// Normalize each channel with statistics over `(batch, valid time)`
    /// in train mode or with running statistics in eval mode. Padded frames
    /// come out as zero. In train mode the batch statistics are returned so
    /// the caller can fold them into its running state.
    pub fn batchnorm_time(
        &mut self,
        x: Var,
        mask: &TimeMask,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[0] != mask.batch() || s[2] != mask.max_time() {
            return Err(Error::dim("batchnorm_time", &s, &[mask.batch(), mask.max_time()]));
        }
        let (c, time) = (s[1], s[2]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim("batchnorm_time", &s, self.shape(gamma)));
        }
        let xv = self.value(x).data();
        let lengths = mask.valid_lengths();
        let (mean, var, stats) = match mode {
            NormMode::Train => {
                let n = mask.total_valid() as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for (i, &len) in lengths.iter().enumerate() {
                    for j in 0..c {
                        let base = (i * c + j) * time;
                        mean[j] += xv[base..base + len].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for (i, &len) in lengths.iter().enumerate() {
                    for j in 0..c {
                        let base = (i * c + j) * time;
                        var[j] += xv[base..base + len]
                            .iter()
                            .map(|v| (v - mean[j]).powi(2))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: var.clone(),
                };
                (mean, var, Some(stats))
            }
            NormMode::Eval(running) => {
                if !running.is_populated() {
                    return Err(Error::State(
                        "batch norm running statistics are unpopulated".into(),
                    ));
                }
                if running.mean.len() != c {
                    return Err(Error::dim("batchnorm_time", &[c], &[running.mean.len()]));
                }
                (running.mean.clone(), running.var.clone(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (i, &len) in lengths.iter().enumerate() {
            for j in 0..c {
                let base = (i * c + j) * time;
                for t in 0..len {
                    let h = (xv[base + t] - mean[j]) * inv_std[j];
                    xhat[base + t] = h;
                    out[base + t] = gv[j] * h + bv[j];
                }
            }
        }
        let cache = BatchNormCache {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            lengths: lengths.to_vec(),
            train: stats.is_some(),
        };
        let v = self.push(Tensor::from_parts(s, out), Op::BatchNorm(cache), &[x, gamma, beta]);
        Ok((v, stats))
    }
}
