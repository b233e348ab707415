use super::graph::{mask_time_values, Op, BCE_CLAMP};
use super::linalg::{gemm, swap_last_two};
use super::{Graph, Tensor, TimeMask, Var};
use crate::error::{Error, Result};

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn check_mask(&self, op: &'static str, x: Var, mask: &TimeMask, time_axis: usize) -> Result<()> {
        let s = self.shape(x);
        if s[0] != mask.batch() || s[time_axis] != mask.max_time() {
            return Err(Error::dim(op, s, &[mask.batch(), mask.max_time()]));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = gemm(self.value(a).data(), (m, k), false, self.value(b).data(), (k, n), false);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// `x[m×n] + bias[n]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::dim("add_bias", sx, sb));
        }
        let n = sb[0];
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let v = Tensor::from_parts(sx.to_vec(), out);
        Ok(self.push(v, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|v| v * c);
        self.push(v, Op::Scale(x, c), &[x])
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        match kind {
            Activation::Sigmoid => {
                let v = xv.map(sigmoid);
                self.push(v, Op::Sigmoid(x), &[x])
            }
            Activation::Tanh => {
                let v = xv.map(f64::tanh);
                self.push(v, Op::Tanh(x), &[x])
            }
            Activation::Relu => {
                let v = xv.map(|v| v.max(0.0));
                self.push(v, Op::Relu(x), &[x])
            }
        }
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(v, Op::Mean(x), &[x])
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || len == 0 || start + len > s[1] {
            return Err(Error::dim("slice_cols", s, &[start, len]));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let v = Tensor::from_parts(vec![rows, len], out);
        Ok(self.push(v, Op::SliceCols { x, start }, &[x]))
    }

    /// Concatenate along axis 1 (columns of a matrix, channels of a
    /// `batch×channels×time` tensor). All other dims must agree.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Precondition("concat of an empty list".into()))?;
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return Err(Error::dim("concat_channels", &s0, &[]));
        }
        let mut channels = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return Err(Error::dim("concat_channels", &s0, s));
            }
            channels += s[1];
        }
        let batch = s0[0];
        let inner: usize = s0[2..].iter().product();
        let mut out = Vec::with_capacity(batch * channels * inner);
        for b in 0..batch {
            for &x in xs {
                let xv = self.value(x);
                let width = xv.shape()[1] * inner;
                out.extend_from_slice(&xv.data()[b * width..(b + 1) * width]);
            }
        }
        let mut shape = s0;
        shape[1] = channels;
        let v = Tensor::from_parts(shape, out);
        Ok(self.push(v, Op::Concat { xs: xs.to_vec() }, xs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// `[batch×channels×time]` to `[(batch·time)×channels]`; row `i·time+t`
    /// holds frame `t` of item `i`.
    pub fn to_rows(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::dim("to_rows", &s, &[]));
        }
        let data = swap_last_two(self.value(x).data(), s[0], s[1], s[2]);
        let v = Tensor::from_parts(vec![s[0] * s[2], s[1]], data);
        Ok(self.push(v, Op::ToRows(x), &[x]))
    }

    /// Inverse of [`Graph::to_rows`].
    pub fn from_rows(&mut self, x: Var, batch: usize, time: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != batch * time {
            return Err(Error::dim("from_rows", &s, &[batch, time]));
        }
        let c = s[1];
        let data = swap_last_two(self.value(x).data(), batch, time, c);
        let v = Tensor::from_parts(vec![batch, c, time], data);
        Ok(self.push(v, Op::FromRows { x, batch, time }, &[x]))
    }

    /// Rows `i·time + t` of a row-major sequence matrix, giving `[batch×c]`.
    pub fn time_rows(&mut self, x: Var, t: usize, time: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || time == 0 || !s[0].is_multiple_of(time) || t >= time {
            return Err(Error::dim("time_rows", &s, &[t, time]));
        }
        let (batch, c) = (s[0] / time, s[1]);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(batch * c);
        for i in 0..batch {
            let row = i * time + t;
            out.extend_from_slice(&src[row * c..(row + 1) * c]);
        }
        let v = Tensor::from_parts(vec![batch, c], out);
        Ok(self.push(v, Op::TimeRows { x, t, time }, &[x]))
    }

    /// Stack per-step `[batch×c]` tensors into `[batch×c×time]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| Error::Precondition("stack of zero time steps".into()))?;
        let s = self.shape(first).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("stack_time", &s, &[]));
        }
        let (batch, c, time) = (s[0], s[1], steps.len());
        let mut out = vec![0.0; batch * c * time];
        for (t, &x) in steps.iter().enumerate() {
            if self.shape(x) != s.as_slice() {
                return Err(Error::dim("stack_time", &s, self.shape(x)));
            }
            for (k, &v) in self.value(x).data().iter().enumerate() {
                out[k * time + t] = v;
            }
        }
        let v = Tensor::from_parts(vec![batch, c, time], out);
        Ok(self.push(v, Op::StackTime(steps.to_vec()), steps))
    }

    /// Zero the rows of a 2-D tensor where `keep` is false.
    pub fn mask_rows(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != keep.len() {
            return Err(Error::dim("mask_rows", &s, &[keep.len()]));
        }
        let mut out = self.value(x).data().to_vec();
        for (row, &k) in out.chunks_mut(s[1]).zip(&keep) {
            if !k {
                row.fill(0.0);
            }
        }
        let v = Tensor::from_parts(s, out);
        Ok(self.push(v, Op::MaskRows { x, keep }, &[x]))
    }

    /// Zero every padded frame of a `[batch×channels×time]` tensor.
    pub fn mask_time(&mut self, x: Var, mask: &TimeMask) -> Result<Var> {
        if self.shape(x).len() != 3 {
            return Err(Error::dim("mask_time", self.shape(x), &[]));
        }
        self.check_mask("mask_time", x, mask, 2)?;
        let lengths = mask.valid_lengths().to_vec();
        let v = mask_time_values(self.value(x), &lengths);
        Ok(self.push(v, Op::MaskTime { x, lengths }, &[x]))
    }

    /// Softmax over the valid positions of each row of `[batch×time]`;
    /// padded positions get weight exactly zero.
    pub fn softmax_masked(&mut self, scores: Var, mask: &TimeMask) -> Result<Var> {
        if self.shape(scores).len() != 2 {
            return Err(Error::dim("softmax_masked", self.shape(scores), &[]));
        }
        self.check_mask("softmax_masked", scores, mask, 1)?;
        let time = mask.max_time();
        let src = self.value(scores).data();
        let mut out = vec![0.0; src.len()];
        for (i, &len) in mask.valid_lengths().iter().enumerate() {
            let row = &src[i * time..i * time + len];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (t, e) in exps.iter().enumerate() {
                out[i * time + t] = e / total;
            }
        }
        let v = Tensor::from_parts(self.shape(scores).to_vec(), out);
        let lengths = mask.valid_lengths().to_vec();
        Ok(self.push(v, Op::SoftmaxMasked { x: scores, lengths }, &[scores]))
    }

    /// Mean over valid frames: `[batch×channels×time]` to `[batch×channels]`.
    ///
    /// Each channel is summed in ascending value order, so the result does
    /// not depend on frame order even in the last bit.
    pub fn masked_mean_time(&mut self, x: Var, mask: &TimeMask) -> Result<Var> {
        if self.shape(x).len() != 3 {
            return Err(Error::dim("masked_mean_time", self.shape(x), &[]));
        }
        self.check_mask("masked_mean_time", x, mask, 2)?;
        let s = self.shape(x).to_vec();
        let (batch, c, time) = (s[0], s[1], s[2]);
        let src = self.value(x).data();
        let mut out = vec![0.0; batch * c];
        let mut scratch = Vec::with_capacity(time);
        for (i, &len) in mask.valid_lengths().iter().enumerate() {
            for j in 0..c {
                let base = (i * c + j) * time;
                scratch.clear();
                scratch.extend_from_slice(&src[base..base + len]);
                scratch.sort_unstable_by(f64::total_cmp);
                let total: f64 = scratch.iter().sum();
                out[i * c + j] = total / len as f64;
            }
        }
        let v = Tensor::from_parts(vec![batch, c], out);
        let lengths = mask.valid_lengths().to_vec();
        Ok(self.push(v, Op::MaskedMeanTime { x, lengths }, &[x]))
    }

    /// `out[i,j] = Σ_t alpha[i,t] · h[i,j,t]`.
    pub fn weighted_time_sum(&mut self, h: Var, alpha: Var) -> Result<Var> {
        let (sh, sa) = (self.shape(h).to_vec(), self.shape(alpha).to_vec());
        if sh.len() != 3 || sa.len() != 2 || sh[0] != sa[0] || sh[2] != sa[1] {
            return Err(Error::dim("weighted_time_sum", &sh, &sa));
        }
        let (batch, c, time) = (sh[0], sh[1], sh[2]);
        let (hv, av) = (self.value(h).data(), self.value(alpha).data());
        let mut out = vec![0.0; batch * c];
        for i in 0..batch {
            for j in 0..c {
                let base = (i * c + j) * time;
                out[i * c + j] = (0..time).map(|t| av[i * time + t] * hv[base + t]).sum();
            }
        }
        let v = Tensor::from_parts(vec![batch, c], out);
        Ok(self.push(v, Op::WeightedTimeSum { h, alpha }, &[h, alpha]))
    }

    /// Mean binary cross-entropy with probabilities clamped to
    /// `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, probabilities: Var, targets: &Tensor) -> Result<Var> {
        let pv = self.value(probabilities);
        if pv.shape() != targets.shape() {
            return Err(Error::dim("bce_loss", pv.shape(), targets.shape()));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let v = Tensor::scalar(total / pv.len() as f64);
        let op = Op::Bce {
            p: probabilities,
            targets: targets.clone(),
        };
        Ok(self.push(v, op, &[probabilities]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut g = Graph::new();
        let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = g.matmul(i2, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = g.constant(t(&[2, 1], &[3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn activations_known_values() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1], &[0.0]));
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).data(), &[0.5]);
        let x = g.constant(t(&[2], &[-1.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let mut g = Graph::new();
        let mask = TimeMask::full(1, 4).unwrap();
        let s = g.constant(Tensor::full(&[1, 4], 3.0));
        let w = g.softmax_masked(s, &mask).unwrap();
        assert_eq!(g.value(w).data(), &[0.25; 4]);

        let mask = TimeMask::full(1, 2).unwrap();
        let s = g.constant(t(&[1, 2], &[10.0, 0.0]));
        let w = g.softmax_masked(s, &mask).unwrap();
        let e = (-10.0f64).exp();
        let expected = [1.0 / (1.0 + e), e / (1.0 + e)];
        for (a, b) in g.value(w).data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_masked_position_is_inert() {
        let mut g = Graph::new();
        let two = TimeMask::full(1, 2).unwrap();
        let s = g.constant(t(&[1, 2], &[0.3, -1.2]));
        let w2 = g.softmax_masked(s, &two).unwrap();
        let three = TimeMask::new(3, vec![2]).unwrap();
        let s = g.constant(t(&[1, 3], &[0.3, -1.2, 1e6]));
        let w3 = g.softmax_masked(s, &three).unwrap();
        assert_eq!(g.value(w3).data()[..2], g.value(w2).data()[..]);
        assert_eq!(g.value(w3).data()[2], 0.0);
    }

    #[test]
    fn softmax_rejects_mismatched_mask() {
        let mut g = Graph::new();
        let s = g.constant(Tensor::zeros(&[1, 3]));
        let mask = TimeMask::full(1, 2).unwrap();
        assert!(g.softmax_masked(s, &mask).is_err());
    }

    #[test]
    fn masked_mean_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 2], &[1.0, 3.0]));
        let m = g.masked_mean_time(x, &TimeMask::full(1, 2).unwrap()).unwrap();
        assert_eq!(g.value(m).data(), &[2.0]);
        let x = g.constant(t(&[1, 1, 4], &[1.0, 3.0, 99.0, -7.0]));
        let m = g.masked_mean_time(x, &TimeMask::new(4, vec![2]).unwrap()).unwrap();
        assert_eq!(g.value(m).data(), &[2.0]);
        let x = g.constant(Tensor::full(&[2, 3, 5], 1.5));
        let m = g.masked_mean_time(x, &TimeMask::new(5, vec![5, 2]).unwrap()).unwrap();
        assert!(g.value(m).data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn concat_channels_shapes() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::zeros(&[2, 1024, 3]));
        let a = g.constant(Tensor::ones(&[2, 128, 3]));
        let c = g.concat_channels(&[v, a]).unwrap();
        assert_eq!(g.shape(c), &[2, 1152, 3]);
        assert_eq!(g.value(c).at3(1, 1024, 2), 1.0);
        assert_eq!(g.value(c).at3(1, 1023, 2), 0.0);

        let single = g.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = g.concat_channels(&[single]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let bad = g.constant(Tensor::ones(&[2, 128, 4]));
        assert!(g.concat_channels(&[v, bad]).is_err());
    }

    #[test]
    fn rows_roundtrip() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = g.constant(t(&[2, 3, 4], &data));
        let rows = g.to_rows(x).unwrap();
        assert_eq!(g.shape(rows), &[8, 3]);
        // row 1*4+2 = item 1, t = 2, channels 0..3
        let r = g.time_rows(rows, 2, 4).unwrap();
        assert_eq!(g.value(r).data()[3..6], [14.0, 18.0, 22.0]);
        let back = g.from_rows(rows, 2, 4).unwrap();
        assert_eq!(g.value(back).data(), &data[..]);
    }

    #[test]
    fn bce_closed_forms() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::full(&[2, 3], 0.5));
        let y = t(&[2, 3], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let l = g.bce(p, &y).unwrap();
        assert!((g.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let p = g.constant(y.clone());
        let l = g.bce(p, &y).unwrap();
        let loss = g.value(l).data()[0];
        assert!(loss > 0.0 && loss < 1e-6);
    }
}
