//! Frame-level record files, batch padding and synthetic data.

mod batch;
mod records;
mod synthetic;

pub use batch::{pad_batch, Batch};
pub use records::{
    read_records, write_records, Dataset, DatasetHeader, RecordReader, VideoRecord, DEFAULT_AUDIO_DIM,
    DEFAULT_MAX_FRAMES, DEFAULT_VISUAL_DIM, HEADER_BYTES, RECORD_MAGIC, RECORD_VERSION,
};
pub use synthetic::{class_prototypes, generate_synthetic, SyntheticConfig, DRIFT_SCALE, LABEL_COUNT_PROBS};
