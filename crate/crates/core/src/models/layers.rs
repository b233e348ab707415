use rand::Rng;

use crate::core_math::{BatchStats, Bound, Graph, NormMode, ParamId, ParamStore, RunningStats, Tensor, TimeMask, Var};
use crate::error::{Error, Result};
use crate::recurrent::{run_bidirectional, CellKind, RecurrentCellParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch statistics produced by one batch-norm layer in train mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate {
    pub(crate) layer: BatchNormLayer,
    pub stats: BatchStats,
}

/// Per-pass state threaded through the architectures.
pub(crate) struct Ctx<'a> {
    pub(crate) g: &'a mut Graph,
    pub(crate) bound: Bound,
    pub(crate) store: &'a ParamStore,
    pub(crate) mode: Mode,
    pub(crate) bn_updates: Vec<BnUpdate>,
}

impl Ctx<'_> {
    pub(crate) fn var(&self, id: ParamId) -> Var {
        self.bound.var(id)
    }
}

/// Fully-connected layer on rows: `x[n×in] · W[in×out] + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add(format!("{prefix}.weight"), Tensor::uniform(&[input, output], bound, rng));
        let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(&[output]));
        Self {
            input,
            output,
            weight,
            bias,
        }
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.var(self.weight), ctx.var(self.bias));
        let y = ctx.g.matmul(x, w)?;
        ctx.g.add_bias(y, b)
    }

    /// Apply per frame to `[batch×input×time]`.
    pub(crate) fn forward_frames(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let s = ctx.g.shape(x).to_vec();
        let rows = ctx.g.to_rows(x)?;
        let y = self.forward(ctx, rows)?;
        ctx.g.from_rows(y, s[0], s[2])
    }
}

/// `FC → ReLU → FC → sigmoid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub hidden: Linear,
    pub output: Linear,
}

impl MlpHead {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, input: usize, fc_sizes: [usize; 2], rng: &mut R) -> Self {
        Self {
            hidden: Linear::init(store, "head.fc1", input, fc_sizes[0], rng),
            output: Linear::init(store, "head.fc2", fc_sizes[0], fc_sizes[1], rng),
        }
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, features: Var) -> Result<Var> {
        let s = ctx.g.shape(features);
        if s.len() != 2 || s[1] != self.hidden.input {
            return Err(Error::dim("mlp_classify", s, &[self.hidden.input]));
        }
        let h = self.hidden.forward(ctx, features)?;
        let h = ctx.g.relu(h);
        let logits = self.output.forward(ctx, h)?;
        Ok(ctx.g.sigmoid(logits))
    }
}

/// Forward and backward cells of one bidirectional layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiCell {
    pub fwd: RecurrentCellParams,
    pub bwd: RecurrentCellParams,
}

impl BiCell {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            fwd: RecurrentCellParams::init(store, &format!("{prefix}.fwd"), kind, input, hidden, rng),
            bwd: RecurrentCellParams::init(store, &format!("{prefix}.bwd"), kind, input, hidden, rng),
        }
    }

    pub fn output_channels(&self) -> usize {
        2 * self.fwd.hidden_size
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, x: Var, mask: &TimeMask) -> Result<Var> {
        let f = self.fwd.bind(&ctx.bound);
        let b = self.bwd.bind(&ctx.bound);
        run_bidirectional(ctx.g, &f, &b, x, mask)
    }
}

/// Temporal convolution with "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl Conv1dLayer {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((c_in * width) as f64).sqrt();
        Self {
            kernel: store.add(format!("{prefix}.kernel"), Tensor::uniform(&[c_out, c_in, width], bound, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[c_out])),
        }
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let (k, b) = (ctx.var(self.kernel), ctx.var(self.bias));
        ctx.g.conv1d_same(x, k, b)
    }
}

/// Batch norm over valid frames; running statistics live in the store as
/// non-trainable entries (`mean`, `var`, and a one-element update count).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub running_count: ParamId,
}

impl BatchNormLayer {
    pub fn init(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::ones(&[channels])),
            beta: store.add(format!("{prefix}.beta"), Tensor::zeros(&[channels])),
            running_mean: store.add_state(format!("{prefix}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_state(format!("{prefix}.running_var"), Tensor::ones(&[channels])),
            running_count: store.add_state(format!("{prefix}.running_count"), Tensor::zeros(&[1])),
        }
    }

    pub fn running(&self, store: &ParamStore) -> RunningStats {
        RunningStats {
            mean: store.get(self.running_mean).data().to_vec(),
            var: store.get(self.running_var).data().to_vec(),
            updates: store.get(self.running_count).data()[0] as u64,
        }
    }

    pub(crate) fn apply(&self, store: &mut ParamStore, stats: &BatchStats) {
        let mut running = self.running(store);
        running.update(stats);
        store.get_mut(self.running_mean).data_mut().copy_from_slice(&running.mean);
        store.get_mut(self.running_var).data_mut().copy_from_slice(&running.var);
        store.get_mut(self.running_count).data_mut()[0] = running.updates as f64;
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, x: Var, mask: &TimeMask) -> Result<Var> {
        let (gamma, beta) = (ctx.var(self.gamma), ctx.var(self.beta));
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = ctx.g.batchnorm_time(x, mask, gamma, beta, NormMode::Train)?;
                ctx.bn_updates.push(BnUpdate {
                    layer: self.clone(),
                    stats: stats.expect("train mode yields stats"),
                });
                Ok(y)
            }
            Mode::Eval => {
                let running = self.running(ctx.store);
                let (y, _) = ctx.g.batchnorm_time(x, mask, gamma, beta, NormMode::Eval(&running))?;
                Ok(y)
            }
        }
    }
}

/// `conv → BN → ReLU → conv → BN → (+ shortcut) → ReLU`, re-masked.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBlock {
    pub conv1: Conv1dLayer,
    pub bn1: BatchNormLayer,
    pub conv2: Conv1dLayer,
    pub bn2: BatchNormLayer,
}

pub const TRB_WIDTH: usize = 3;

impl TemporalBlock {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, channels: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv1dLayer::init(store, &format!("{prefix}.conv1"), channels, channels, TRB_WIDTH, rng),
            bn1: BatchNormLayer::init(store, &format!("{prefix}.bn1"), channels),
            conv2: Conv1dLayer::init(store, &format!("{prefix}.conv2"), channels, channels, TRB_WIDTH, rng),
            bn2: BatchNormLayer::init(store, &format!("{prefix}.bn2"), channels),
        }
    }

    pub(crate) fn forward(&self, ctx: &mut Ctx<'_>, x: Var, mask: &TimeMask) -> Result<Var> {
        let y = self.conv1.forward(ctx, x)?;
        let y = self.bn1.forward(ctx, y, mask)?;
        let y = ctx.g.relu(y);
        let y = self.conv2.forward(ctx, y)?;
        let y = self.bn2.forward(ctx, y, mask)?;
        let y = ctx.g.add(y, x)?;
        let y = ctx.g.relu(y);
        ctx.g.mask_time(y, mask)
    }
}
