//! Unrolling cells over padded sequences.

use super::cell::{gru_step_projected, lstm_step_projected, CellKind, CellVars, GruHidden};
use crate::core_math::{Graph, Tensor, TimeMask, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Walks each item's valid prefix from its last valid frame back to
    /// frame 0; padded frames never touch the state.
    Backward,
}

/// Run one cell over `x: [batch×input×time]`, returning `[batch×hidden×time]`
/// with exact zeros at padded frames. Initial states are zero.
pub fn run_direction(
    g: &mut Graph,
    cell: &CellVars,
    x: Var,
    mask: &TimeMask,
    direction: Direction,
) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 3 || s[1] != cell.input_size {
        return Err(Error::dim("run_direction", &s, &[cell.input_size]));
    }
    if s[0] != mask.batch() || s[2] != mask.max_time() {
        return Err(Error::dim("run_direction", &s, &[mask.batch(), mask.max_time()]));
    }
    let (batch, time) = (s[0], s[2]);
    let hs = cell.hidden_size;
    let rows = g.to_rows(x)?;
    let proj = cell.project_input(g, rows)?;
    let gru = match cell.kind {
        CellKind::Gru => Some(GruHidden::split(g, cell)?),
        CellKind::Lstm => None,
    };
    let zeros = g.constant(Tensor::zeros(&[batch, hs]));
    let (mut h, mut c) = (zeros, zeros);
    let mut outputs = vec![zeros; time];
    let order: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(0..time),
        Direction::Backward => Box::new((0..time).rev()),
    };
    for t in order {
        let x_t = g.time_rows(proj, t, time)?;
        let keep: Vec<bool> = (0..batch).map(|i| mask.is_valid(i, t)).collect();
        let all_valid = keep.iter().all(|&k| k);
        match &gru {
            None => {
                let (h_new, c_new) = lstm_step_projected(g, cell, x_t, h, c)?;
                if all_valid {
                    (h, c) = (h_new, c_new);
                } else {
                    h = g.mask_rows(h_new, keep.clone())?;
                    c = g.mask_rows(c_new, keep)?;
                }
            }
            Some(w) => {
                let h_new = gru_step_projected(g, cell, w, x_t, h)?;
                h = if all_valid { h_new } else { g.mask_rows(h_new, keep)? };
            }
        }
        outputs[t] = h;
    }
    g.stack_time(&outputs)
}

/// Forward and backward passes concatenated per frame:
/// `[batch×input×time]` to `[batch×(2·hidden)×time]`.
pub fn run_bidirectional(
    g: &mut Graph,
    fwd: &CellVars,
    bwd: &CellVars,
    x: Var,
    mask: &TimeMask,
) -> Result<Var> {
    if fwd.hidden_size != bwd.hidden_size || fwd.input_size != bwd.input_size {
        return Err(Error::dim(
            "run_bidirectional",
            &[fwd.input_size, fwd.hidden_size],
            &[bwd.input_size, bwd.hidden_size],
        ));
    }
    let forward = run_direction(g, fwd, x, mask, Direction::Forward)?;
    let backward = run_direction(g, bwd, x, mask, Direction::Backward)?;
    g.concat_channels(&[forward, backward])
}
