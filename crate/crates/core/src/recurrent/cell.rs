use rand::Rng;

use crate::core_math::{Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate blocks per cell: LSTM `[input | forget | output | candidate]`,
    /// GRU `[update | reset | candidate]`.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Parameters of one LSTM or GRU cell, stored in a [`ParamStore`].
///
/// The per-gate matrices are kept fused: `w_input` is
/// `input_size × (gates·hidden)` and `w_hidden` is
/// `hidden_size × (gates·hidden)`, so the columns of gate `k` taken from both
/// form that gate's `(input+hidden) → hidden` map.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCellParams {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

impl RecurrentCellParams {
    /// Gate weights uniform in `±1/√(input+hidden)`; biases zero except the
    /// LSTM forget gate, which starts at 1.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: CellKind,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let width = kind.gates() * hidden_size;
        let bound = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        let w_input = store.add(
            format!("{prefix}.w_input"),
            Tensor::uniform(&[input_size, width], bound, rng),
        );
        let w_hidden = store.add(
            format!("{prefix}.w_hidden"),
            Tensor::uniform(&[hidden_size, width], bound, rng),
        );
        let mut bias = Tensor::zeros(&[width]);
        if kind == CellKind::Lstm {
            bias.data_mut()[hidden_size..2 * hidden_size].fill(1.0);
        }
        let bias = store.add(format!("{prefix}.bias"), bias);
        Self {
            kind,
            input_size,
            hidden_size,
            w_input,
            w_hidden,
            bias,
        }
    }

    pub fn bind(&self, bound: &Bound) -> CellVars {
        CellVars {
            kind: self.kind,
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            w_input: bound.var(self.w_input),
            w_hidden: bound.var(self.w_hidden),
            bias: bound.var(self.bias),
        }
    }
}

/// A cell's parameters registered on a graph.
#[derive(Debug, Clone, Copy)]
pub struct CellVars {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

impl CellVars {
    fn check(&self, g: &Graph, op: &'static str, x_t: Var, h_prev: Var) -> Result<()> {
        let (sx, sh) = (g.shape(x_t), g.shape(h_prev));
        if sx.len() != 2 || sx[1] != self.input_size || sh != [sx[0], self.hidden_size] {
            return Err(Error::dim(op, sx, sh));
        }
        Ok(())
    }

    /// `x_t · w_input + bias`.
    pub(crate) fn project_input(&self, g: &mut Graph, x_rows: Var) -> Result<Var> {
        let p = g.matmul(x_rows, self.w_input)?;
        g.add_bias(p, self.bias)
    }
}

/// One LSTM step:
/// `i,f,o = σ(W·[x;h]+b)`, `g = tanh(W_g·[x;h]+b_g)`,
/// `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_step(
    g: &mut Graph,
    cell: &CellVars,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    if cell.kind != CellKind::Lstm {
        return Err(Error::Config("lstm_step on a GRU cell".into()));
    }
    cell.check(g, "lstm_step", x_t, h_prev)?;
    if g.shape(c_prev) != g.shape(h_prev) {
        return Err(Error::dim("lstm_step", g.shape(c_prev), g.shape(h_prev)));
    }
    let proj = cell.project_input(g, x_t)?;
    lstm_step_projected(g, cell, proj, h_prev, c_prev)
}

pub(crate) fn lstm_step_projected(
    g: &mut Graph,
    cell: &CellVars,
    x_proj: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hs = cell.hidden_size;
    let rec = g.matmul(h_prev, cell.w_hidden)?;
    let pre = g.add(x_proj, rec)?;
    let sig_pre = g.slice_cols(pre, 0, 3 * hs)?;
    let gates = g.sigmoid(sig_pre);
    let input_gate = g.slice_cols(gates, 0, hs)?;
    let forget_gate = g.slice_cols(gates, hs, hs)?;
    let output_gate = g.slice_cols(gates, 2 * hs, hs)?;
    let cand_pre = g.slice_cols(pre, 3 * hs, hs)?;
    let candidate = g.tanh(cand_pre);
    let kept = g.mul(forget_gate, c_prev)?;
    let written = g.mul(input_gate, candidate)?;
    let c = g.add(kept, written)?;
    let squashed = g.tanh(c);
    let h = g.mul(output_gate, squashed)?;
    Ok((h, c))
}

/// One GRU step:
/// `z,r = σ(W·[x;h]+b)`, `n = tanh(W_n·[x; r⊙h]+b_n)`,
/// `h = (1−z)⊙h_prev + z⊙n`.
pub fn gru_step(g: &mut Graph, cell: &CellVars, x_t: Var, h_prev: Var) -> Result<Var> {
    if cell.kind != CellKind::Gru {
        return Err(Error::Config("gru_step on an LSTM cell".into()));
    }
    cell.check(g, "gru_step", x_t, h_prev)?;
    let proj = cell.project_input(g, x_t)?;
    let split = GruHidden::split(g, cell)?;
    gru_step_projected(g, cell, &split, proj, h_prev)
}

/// Column blocks of a GRU's `w_hidden`: gates and candidate.
pub(crate) struct GruHidden {
    gates: Var,
    candidate: Var,
}

impl GruHidden {
    pub(crate) fn split(g: &mut Graph, cell: &CellVars) -> Result<Self> {
        let hs = cell.hidden_size;
        Ok(Self {
            gates: g.slice_cols(cell.w_hidden, 0, 2 * hs)?,
            candidate: g.slice_cols(cell.w_hidden, 2 * hs, hs)?,
        })
    }
}

pub(crate) fn gru_step_projected(
    g: &mut Graph,
    cell: &CellVars,
    w: &GruHidden,
    x_proj: Var,
    h_prev: Var,
) -> Result<Var> {
    let hs = cell.hidden_size;
    let x_gates = g.slice_cols(x_proj, 0, 2 * hs)?;
    let h_gates = g.matmul(h_prev, w.gates)?;
    let gate_pre = g.add(x_gates, h_gates)?;
    let gates = g.sigmoid(gate_pre);
    let update = g.slice_cols(gates, 0, hs)?;
    let reset = g.slice_cols(gates, hs, hs)?;
    let reset_h = g.mul(reset, h_prev)?;
    let h_cand = g.matmul(reset_h, w.candidate)?;
    let x_cand = g.slice_cols(x_proj, 2 * hs, hs)?;
    let cand_pre = g.add(x_cand, h_cand)?;
    let candidate = g.tanh(cand_pre);
    // (1−z)⊙h + z⊙n = h + z⊙(n − h)
    let delta = g.sub(candidate, h_prev)?;
    let step = g.mul(update, delta)?;
    g.add(h_prev, step)
}
