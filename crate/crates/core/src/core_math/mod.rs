//! Dense tensors, time masks and the differentiable primitives every
//! architecture is built from.

mod conv;
pub mod gradcheck;
mod graph;
mod linalg;
mod mask;
mod norm;
mod ops;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use mask::TimeMask;
pub use norm::{BatchStats, NormMode, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use ops::Activation;
pub use params::{Bound, ParamEntry, ParamId, ParamStore};
pub use tensor::Tensor;

