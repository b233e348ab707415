//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are only
//! ever appended, so the node order is a topological order and the backward
//! sweep is a single reverse pass over the node list.

use super::linalg::{gemm, swap_last_two};
use super::{conv, norm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    SliceCols { x: Var, start: usize },
    Concat { xs: Vec<Var> },
    Reshape(Var),
    ToRows(Var),
    FromRows { x: Var, batch: usize, time: usize },
    TimeRows { x: Var, t: usize, time: usize },
    StackTime(Vec<Var>),
    MaskRows { x: Var, keep: Vec<bool> },
    MaskTime { x: Var, lengths: Vec<usize> },
    Conv1d(conv::ConvCache),
    BatchNorm(norm::BatchNormCache),
    SoftmaxMasked { x: Var, lengths: Vec<usize> },
    MaskedMeanTime { x: Var, lengths: Vec<usize> },
    WeightedTimeSum { h: Var, alpha: Var },
    Bce { p: Var, targets: Tensor },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SliceCols { .. } => "slice_cols",
            Op::Concat { .. } => "concat",
            Op::Reshape(_) => "reshape",
            Op::ToRows(_) => "to_rows",
            Op::FromRows { .. } => "from_rows",
            Op::TimeRows { .. } => "time_rows",
            Op::StackTime(_) => "stack_time",
            Op::MaskRows { .. } => "mask_rows",
            Op::MaskTime { .. } => "mask_time",
            Op::Conv1d(_) => "conv1d_same",
            Op::BatchNorm(_) => "batchnorm_time",
            Op::SoftmaxMasked { .. } => "softmax_masked",
            Op::MaskedMeanTime { .. } => "masked_mean_time",
            Op::WeightedTimeSum { .. } => "weighted_time_sum",
            Op::Bce { .. } => "bce_loss",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Operation tape for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
    non_finite: Option<&'static str>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Leaf that does not take part in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, false, Op::Leaf)
    }

    /// Leaf whose gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass, if `v` requires grad.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        if !self.backward_done || !self.nodes[v.0].requires_grad {
            return None;
        }
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fails if any node produced a NaN or infinity.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite(op.to_string())),
            None => Ok(()),
        }
    }

    /// Forget gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, requires_grad, op)
    }

    fn push_raw(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Accumulate d`loss`/d`v` for every ancestor `v` that requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this graph; call zero_grad first".into(),
            ));
        }
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        self.ensure_finite()?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let ga = gemm(g.data(), (m, n), false, bv.data(), (k, n), true);
                    acc(*a, Tensor::from_parts(vec![m, k], ga));
                }
                if self.nodes[b.0].requires_grad {
                    let gb = gemm(av.data(), (m, k), true, g.data(), (m, n), false);
                    acc(*b, Tensor::from_parts(vec![k, n], gb));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |gv, bv| gv * bv));
                acc(*b, g.zip_map(val(*a), |gv, av| gv * av));
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let n = g.shape()[1];
                let mut gb = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                acc(*b, Tensor::from_parts(vec![n], gb));
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * c)),
            Op::Sigmoid(x) => acc(*x, g.zip_map(y, |gv, s| gv * s * (1.0 - s))),
            Op::Tanh(x) => acc(*x, g.zip_map(y, |gv, t| gv * (1.0 - t * t))),
            Op::Relu(x) => acc(*x, g.zip_map(y, |gv, r| if r > 0.0 { gv } else { 0.0 })),
            Op::Sum(x) => acc(*x, Tensor::full(val(*x).shape(), g.data()[0])),
            Op::Mean(x) => {
                let xv = val(*x);
                acc(*x, Tensor::full(xv.shape(), g.data()[0] / xv.len() as f64));
            }
            Op::SliceCols { x, start } => {
                let xs = val(*x).shape();
                let (rows, cols) = (xs[0], xs[1]);
                let width = g.shape()[1];
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    gx[r * cols + start..r * cols + start + width]
                        .copy_from_slice(&g.data()[r * width..(r + 1) * width]);
                }
                acc(*x, Tensor::from_parts(xs.to_vec(), gx));
            }
            Op::Concat { xs } => {
                let out_shape = g.shape();
                let batch = out_shape[0];
                let inner: usize = out_shape[2..].iter().product();
                let total = out_shape[1] * inner;
                let mut offset = 0;
                for x in xs {
                    let xshape = val(*x).shape().to_vec();
                    let width = xshape[1] * inner;
                    let mut gx = Vec::with_capacity(batch * width);
                    for b in 0..batch {
                        let start = b * total + offset;
                        gx.extend_from_slice(&g.data()[start..start + width]);
                    }
                    offset += width;
                    acc(*x, Tensor::from_parts(xshape, gx));
                }
            }
            Op::Reshape(x) => {
                acc(*x, Tensor::from_parts(val(*x).shape().to_vec(), g.data().to_vec()));
            }
            Op::ToRows(x) => {
                let s = val(*x).shape().to_vec();
                let gx = swap_last_two(g.data(), s[0], s[2], s[1]);
                acc(*x, Tensor::from_parts(s, gx));
            }
            Op::FromRows { x, batch, time } => {
                let c = g.shape()[1];
                let gx = swap_last_two(g.data(), *batch, c, *time);
                acc(*x, Tensor::from_parts(val(*x).shape().to_vec(), gx));
            }
            Op::TimeRows { x, t, time } => {
                let xs = val(*x).shape().to_vec();
                let c = xs[1];
                let batch = g.shape()[0];
                let mut gx = vec![0.0; xs[0] * c];
                for i in 0..batch {
                    let row = i * time + t;
                    gx[row * c..(row + 1) * c].copy_from_slice(&g.data()[i * c..(i + 1) * c]);
                }
                acc(*x, Tensor::from_parts(xs, gx));
            }
            Op::StackTime(xs) => {
                let s = g.shape();
                let (batch, c, time) = (s[0], s[1], s[2]);
                for (t, x) in xs.iter().enumerate() {
                    let mut gx = vec![0.0; batch * c];
                    for i in 0..batch {
                        for j in 0..c {
                            gx[i * c + j] = g.data()[(i * c + j) * time + t];
                        }
                    }
                    acc(*x, Tensor::from_parts(vec![batch, c], gx));
                }
            }
            Op::MaskRows { x, keep } => {
                let c = g.shape()[1];
                let mut gx = g.data().to_vec();
                for (row, &k) in gx.chunks_mut(c).zip(keep) {
                    if !k {
                        row.fill(0.0);
                    }
                }
                acc(*x, Tensor::from_parts(g.shape().to_vec(), gx));
            }
            Op::MaskTime { x, lengths } => {
                acc(*x, mask_time_values(g, lengths));
            }
            Op::Conv1d(cache) => {
                let grads = conv::backward(cache, val(cache.x), val(cache.kernel), g);
                acc(cache.x, grads.x);
                acc(cache.kernel, grads.kernel);
                acc(cache.bias, grads.bias);
            }
            Op::BatchNorm(cache) => {
                let grads = norm::backward(cache, val(cache.gamma), g);
                acc(cache.x, grads.x);
                acc(cache.gamma, grads.gamma);
                acc(cache.beta, grads.beta);
            }
            Op::SoftmaxMasked { x, lengths } => {
                let time = g.shape()[1];
                let mut gx = vec![0.0; g.len()];
                for (i, &len) in lengths.iter().enumerate() {
                    let row = i * time;
                    let dot: f64 = (0..len)
                        .map(|t| y.data()[row + t] * g.data()[row + t])
                        .sum();
                    for t in 0..len {
                        gx[row + t] = y.data()[row + t] * (g.data()[row + t] - dot);
                    }
                }
                acc(*x, Tensor::from_parts(g.shape().to_vec(), gx));
            }
            Op::MaskedMeanTime { x, lengths } => {
                let xs = val(*x).shape().to_vec();
                let (c, time) = (xs[1], xs[2]);
                let mut gx = vec![0.0; xs.iter().product()];
                for (i, &len) in lengths.iter().enumerate() {
                    for j in 0..c {
                        let gv = g.data()[i * c + j] / len as f64;
                        let base = (i * c + j) * time;
                        gx[base..base + len].fill(gv);
                    }
                }
                acc(*x, Tensor::from_parts(xs, gx));
            }
            Op::WeightedTimeSum { h, alpha } => {
                let (hv, av) = (val(*h), val(*alpha));
                let s = hv.shape();
                let (batch, c, time) = (s[0], s[1], s[2]);
                let mut gh = vec![0.0; hv.len()];
                let mut ga = vec![0.0; av.len()];
                for i in 0..batch {
                    for j in 0..c {
                        let gv = g.data()[i * c + j];
                        let base = (i * c + j) * time;
                        for t in 0..time {
                            gh[base + t] = gv * av.data()[i * time + t];
                            ga[i * time + t] += gv * hv.data()[base + t];
                        }
                    }
                }
                acc(*h, Tensor::from_parts(s.to_vec(), gh));
                acc(*alpha, Tensor::from_parts(av.shape().to_vec(), ga));
            }
            Op::Bce { p, targets } => {
                let pv = val(*p);
                let n = pv.len() as f64;
                let scale = g.data()[0] / n;
                let gp = pv.zip_map(targets, |pi, yi| {
                    if pi <= BCE_CLAMP || pi >= 1.0 - BCE_CLAMP {
                        0.0
                    } else {
                        scale * (-yi / pi + (1.0 - yi) / (1.0 - pi))
                    }
                });
                acc(*p, gp);
            }
        }
    }
}

pub(crate) const BCE_CLAMP: f64 = 1e-7;

pub(crate) fn mask_time_values(x: &Tensor, lengths: &[usize]) -> Tensor {
    let s = x.shape();
    let (c, time) = (s[1], s[2]);
    let mut out = x.data().to_vec();
    for (i, &len) in lengths.iter().enumerate() {
        for j in 0..c {
            let base = (i * c + j) * time;
            out[base + len..base + time].fill(0.0);
        }
    }
    Tensor::from_parts(s.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let loss = g.sum(w);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let w = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_is_an_error() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(3.0));
        let loss = g.sum(w);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::State(_))));
        g.zero_grad();
        g.backward(loss).unwrap();
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_grad() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::ones(&[2]));
        let w = g.param(Tensor::ones(&[2]));
        let prod = g.mul(c, w).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(w).is_some());
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut g = Graph::new();
        let w = g.param(Tensor::new(&[1], vec![f64::MAX]).unwrap());
        let big = g.scale(w, 10.0);
        let loss = g.sum(big);
        assert!(matches!(g.ensure_finite(), Err(Error::NonFinite(_))));
        assert!(g.backward(loss).is_err());
    }
}
