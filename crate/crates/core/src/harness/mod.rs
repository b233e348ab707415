//! Training loop, optimizer, prediction, ensembling and evaluation.

mod config;
mod optim;
mod predict;
mod train;

pub use config::{TrainConfig, CONFIG_VERSION, DEEP_STACK_CLIP_NORM, DEEP_STACK_DEPTH};
pub use optim::{adam_step, bce_loss, global_norm, AdamConfig, AdamState};
pub use predict::{
    ensemble_average, ensemble_files, evaluate, evaluate_file, predict_dataset, predict_file, predict_probabilities,
    PREDICT_BATCH,
};
pub use train::{
    check_compatible, evaluate_model, train, EpochRecord, TrainOutputs, Trainer, BEST_CHECKPOINT, FINAL_CHECKPOINT,
    METRIC_LOG,
};
