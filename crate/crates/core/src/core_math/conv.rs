//! Temporal convolution with "same" zero padding.
//!
//! Implemented as im2col followed by a single matrix product:
//! `cols[(b·T) × (c_in·w)] · kernelᵀ[(c_in·w) × c_out]`.

use super::graph::Op;
use super::linalg::{gemm, swap_last_two};
use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug)]
pub(crate) struct ConvCache {
    pub(crate) x: Var,
    pub(crate) kernel: Var,
    pub(crate) bias: Var,
    cols: Vec<f64>,
}

pub(crate) struct ConvGrads {
    pub(crate) x: Tensor,
    pub(crate) kernel: Tensor,
    pub(crate) bias: Tensor,
}

fn im2col(x: &[f64], batch: usize, c_in: usize, time: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let row_len = c_in * width;
    let mut cols = vec![0.0; batch * time * row_len];
    for b in 0..batch {
        for t in 0..time {
            let row = &mut cols[(b * time + t) * row_len..(b * time + t + 1) * row_len];
            for c in 0..c_in {
                let src = &x[(b * c_in + c) * time..(b * c_in + c + 1) * time];
                for k in 0..width {
                    let pos = t + k;
                    if pos >= half && pos - half < time {
                        row[c * width + k] = src[pos - half];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], batch: usize, c_in: usize, time: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let row_len = c_in * width;
    let mut x = vec![0.0; batch * c_in * time];
    for b in 0..batch {
        for t in 0..time {
            let row = &cols[(b * time + t) * row_len..(b * time + t + 1) * row_len];
            for c in 0..c_in {
                let dst = &mut x[(b * c_in + c) * time..(b * c_in + c + 1) * time];
                for k in 0..width {
                    let pos = t + k;
                    if pos >= half && pos - half < time {
                        dst[pos - half] += row[c * width + k];
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn backward(cache: &ConvCache, x: &Tensor, kernel: &Tensor, g: &Tensor) -> ConvGrads {
    let (batch, c_in, time) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, width) = (kernel.shape()[0], kernel.shape()[2]);
    let row_len = c_in * width;
    // g: [b × c_out × T] -> rows [(b·T) × c_out]
    let g_rows = swap_last_two(g.data(), batch, c_out, time);
    let g_kernel = gemm(&g_rows, (batch * time, c_out), true, &cache.cols, (batch * time, row_len), false);
    let g_cols = gemm(&g_rows, (batch * time, c_out), false, kernel.data(), (c_out, row_len), false);
    let g_x = col2im(&g_cols, batch, c_in, time, width);
    let mut g_bias = vec![0.0; c_out];
    for row in g_rows.chunks(c_out) {
        for (s, v) in g_bias.iter_mut().zip(row) {
            *s += v;
        }
    }
    ConvGrads {
        x: Tensor::from_parts(x.shape().to_vec(), g_x),
        kernel: Tensor::from_parts(kernel.shape().to_vec(), g_kernel),
        bias: Tensor::from_parts(vec![c_out], g_bias),
    }
}

impl Graph {
    /// Cross-correlation along time, zero-padded by `(width-1)/2` on both
    /// sides so the output keeps the input's time length.
    ///
    /// `x: [batch×c_in×time]`, `kernel: [c_out×c_in×width]`, `bias: [c_out]`.
    pub fn conv1d_same(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (sx, sk, sb) = (
            self.shape(x).to_vec(),
            self.shape(kernel).to_vec(),
            self.shape(bias).to_vec(),
        );
        if sk.len() != 3 {
            return Err(Error::dim("conv1d_same", &sx, &sk));
        }
        let width = sk[2];
        if width % 2 == 0 {
            return Err(Error::Config(format!("conv1d_same needs an odd width, got {width}")));
        }
        if sx.len() != 3 || sx[1] != sk[1] || sb != [sk[0]] {
            return Err(Error::dim("conv1d_same", &sx, &sk));
        }
        let (batch, c_in, time) = (sx[0], sx[1], sx[2]);
        let c_out = sk[0];
        let row_len = c_in * width;
        let cols = im2col(self.value(x).data(), batch, c_in, time, width);
        let mut out_rows = gemm(&cols, (batch * time, row_len), false, self.value(kernel).data(), (c_out, row_len), true);
        let b = self.value(bias).data();
        for row in out_rows.chunks_mut(c_out) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let out = swap_last_two(&out_rows, batch, time, c_out);
        let value = Tensor::from_parts(vec![batch, c_out, time], out);
        let cache = ConvCache {
            x,
            kernel,
            bias,
            cols,
        };
        Ok(self.push(value, Op::Conv1d(cache), &[x, kernel, bias]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct sliding-window evaluation.
    fn naive(x: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
        let (batch, c_in, time) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, width) = (k.shape()[0], k.shape()[2]);
        let half = (width / 2) as isize;
        let mut out = vec![0.0; batch * c_out * time];
        for n in 0..batch {
            for o in 0..c_out {
                for t in 0..time {
                    let mut acc = b.data()[o];
                    for c in 0..c_in {
                        for w in 0..width {
                            let pos = t as isize + w as isize - half;
                            if pos >= 0 && (pos as usize) < time {
                                acc += k.at3(o, c, w) * x.at3(n, c, pos as usize);
                            }
                        }
                    }
                    out[(n * c_out + o) * time + t] = acc;
                }
            }
        }
        out
    }

    fn run(x: Tensor, k: Tensor, b: Tensor) -> Vec<f64> {
        let mut g = Graph::new();
        let (x, k, b) = (g.constant(x), g.constant(k), g.constant(b));
        let y = g.conv1d_same(x, k, b).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(&[1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(run(x, k, Tensor::zeros(&[1])), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn box_kernel_zero_padded() {
        let x = Tensor::new(&[1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(run(x, k, Tensor::zeros(&[1])), vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(batch, c_in, c_out, time, width) in &[(2, 3, 4, 5, 3), (1, 2, 2, 1, 3), (3, 1, 2, 7, 5), (2, 4, 3, 2, 1)] {
            let x = Tensor::uniform(&[batch, c_in, time], 1.0, &mut rng);
            let k = Tensor::uniform(&[c_out, c_in, width], 1.0, &mut rng);
            let b = Tensor::uniform(&[c_out], 1.0, &mut rng);
            let fast = run(x.clone(), k.clone(), b.clone());
            let slow = naive(&x, &k, &b);
            assert_eq!(fast.len(), batch * c_out * time);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_width_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 4]));
        let k = g.constant(Tensor::zeros(&[1, 1, 2]));
        let b = g.constant(Tensor::zeros(&[1]));
        assert!(matches!(g.conv1d_same(x, k, b), Err(Error::Config(_))));
    }
}
