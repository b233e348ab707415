//! Temporal aggregation models for multi-label video classification from
//! frame-level features: two-stream recurrent models with attention,
//! fast-forward deep recurrent stacks, temporal residual convolution, and
//! the average-pooling and VLAD baselines, all trained through a small
//! reverse-mode differentiation engine and scored with GAP@K.

mod binio;
pub mod core_math;
pub mod dataio;
pub mod error;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod recurrent;
pub mod vlad;

pub use error::{Error, Result};
