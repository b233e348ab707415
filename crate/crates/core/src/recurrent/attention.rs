use rand::Rng;

use crate::core_math::{Bound, Graph, ParamId, ParamStore, Tensor, TimeMask, Var};
use crate::error::{Error, Result};

/// Additive attention: `e_t = v · tanh(W·h_t + b)`, `α = softmax(e)` over
/// valid frames, output `Σ_t α_t h_t`.
///
/// `proj_weight` is stored `channels × attn` (applied to row vectors) and
/// `score_vector` as `attn × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub channels: usize,
    pub attn_size: usize,
    pub proj_weight: ParamId,
    pub proj_bias: ParamId,
    pub score_vector: ParamId,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        channels: usize,
        attn_size: usize,
        rng: &mut R,
    ) -> Self {
        let proj_weight = store.add(
            format!("{prefix}.proj_weight"),
            Tensor::uniform(&[channels, attn_size], 1.0 / (channels as f64).sqrt(), rng),
        );
        let proj_bias = store.add(format!("{prefix}.proj_bias"), Tensor::zeros(&[attn_size]));
        let score_vector = store.add(
            format!("{prefix}.score_vector"),
            Tensor::uniform(&[attn_size, 1], 1.0 / (attn_size as f64).sqrt(), rng),
        );
        Self {
            channels,
            attn_size,
            proj_weight,
            proj_bias,
            score_vector,
        }
    }

    pub fn bind(&self, bound: &Bound) -> AttentionVars {
        AttentionVars {
            channels: self.channels,
            proj_weight: bound.var(self.proj_weight),
            proj_bias: bound.var(self.proj_bias),
            score_vector: bound.var(self.score_vector),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub channels: usize,
    pub proj_weight: Var,
    pub proj_bias: Var,
    pub score_vector: Var,
}

/// Attention weights `[batch×time]` for `h: [batch×channels×time]`.
pub fn attention_weights(g: &mut Graph, att: &AttentionVars, h: Var, mask: &TimeMask) -> Result<Var> {
    let s = g.shape(h).to_vec();
    if s.len() != 3 || s[1] != att.channels {
        return Err(Error::dim("attention_pool", &s, &[att.channels]));
    }
    if s[0] != mask.batch() || s[2] != mask.max_time() {
        return Err(Error::dim("attention_pool", &s, &[mask.batch(), mask.max_time()]));
    }
    let rows = g.to_rows(h)?;
    let proj = g.matmul(rows, att.proj_weight)?;
    let proj = g.add_bias(proj, att.proj_bias)?;
    let act = g.tanh(proj);
    let scores = g.matmul(act, att.score_vector)?;
    let scores = g.reshape(scores, &[s[0], s[2]])?;
    g.softmax_masked(scores, mask)
}

/// Pool `h: [batch×channels×time]` to `[batch×channels]`.
pub fn attention_pool(g: &mut Graph, att: &AttentionVars, h: Var, mask: &TimeMask) -> Result<Var> {
    let alpha = attention_weights(g, att, h, mask)?;
    g.weighted_time_sum(h, alpha)
}
