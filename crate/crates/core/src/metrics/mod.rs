//! GAP@k evaluation and the prediction interchange format.

mod gap;
mod predfile;

pub use gap::{gap_at_k, gap_oracle, topk_predictions, GapResult, PredictionSet, ScoredVideo, VideoPrediction, DEFAULT_TOP_K};
pub use predfile::{format_predictions, parse_predictions, read_predictions, write_predictions};
