//! LSTM/GRU cells, sequence runners over padded batches, and additive
//! attention pooling.

mod attention;
mod cell;
mod sequence;

pub use attention::{attention_pool, attention_weights, AttentionParams, AttentionVars};
pub use cell::{gru_step, lstm_step, CellKind, CellVars, RecurrentCellParams};
pub use sequence::{run_bidirectional, run_direction, Direction};
