//! Seeded stand-in for a frame-level video corpus.
//!
//! Each class owns a fixed random prototype frame. A video draws 1–3
//! labels (P = 0.4 / 0.4 / 0.2, so 1.8 labels on average), a frame count in
//! `[min_frames, max_frames]`, and a small linear drift; every frame is the
//! mean of its label prototypes plus the drift ramp plus Gaussian noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::records::{Dataset, DatasetHeader, VideoRecord, DEFAULT_AUDIO_DIM, DEFAULT_MAX_FRAMES, DEFAULT_VISUAL_DIM};
use crate::error::{Error, Result};

/// Standard deviation of the per-video drift vector.
pub const DRIFT_SCALE: f64 = 0.1;
pub const LABEL_COUNT_PROBS: [f64; 3] = [0.4, 0.4, 0.2];

const PROTOTYPE_STREAM: u64 = 1;
const VIDEO_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    pub video_count: usize,
    pub seed: u64,
    /// Seed for the class prototypes; defaults to `seed`. Train and
    /// validation sets must share it to describe the same classes.
    pub prototype_seed: Option<u64>,
    pub noise_sigma: f64,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            vocab_size: 25,
            video_count: 2000,
            seed: 0,
            prototype_seed: None,
            noise_sigma: 1.0,
            visual_dim: DEFAULT_VISUAL_DIM,
            audio_dim: DEFAULT_AUDIO_DIM,
            min_frames: 30,
            max_frames: DEFAULT_MAX_FRAMES,
        }
    }
}

/// Class prototypes, `vocab × (visual+audio)` row-major.
pub fn class_prototypes(config: &SyntheticConfig) -> Vec<f64> {
    let dim = config.visual_dim + config.audio_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.prototype_seed.unwrap_or(config.seed));
    rng.set_stream(PROTOTYPE_STREAM);
    (0..config.vocab_size * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    if config.vocab_size < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs vocab_size >= 2, got {}",
            config.vocab_size
        )));
    }
    if config.min_frames == 0 || config.min_frames > config.max_frames {
        return Err(Error::Config(format!(
            "frame range [{}, {}] is empty",
            config.min_frames, config.max_frames
        )));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise_sigma {} must be >= 0", config.noise_sigma)));
    }
    let dim = config.visual_dim + config.audio_dim;
    let protos = class_prototypes(config);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let drift_dist = Normal::new(0.0, DRIFT_SCALE).expect("valid drift scale");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(VIDEO_STREAM);
    let mut records = Vec::with_capacity(config.video_count);
    for index in 0..config.video_count {
        let u: f64 = rng.random();
        let wanted = if u < LABEL_COUNT_PROBS[0] {
            1
        } else if u < LABEL_COUNT_PROBS[0] + LABEL_COUNT_PROBS[1] {
            2
        } else {
            3
        };
        let count = wanted.min(config.vocab_size);
        let mut labels: Vec<u32> = sample(&mut rng, config.vocab_size, count)
            .into_iter()
            .map(|l| l as u32)
            .collect();
        labels.sort_unstable();
        let frames = rng.random_range(config.min_frames..=config.max_frames);
        let drift: Vec<f64> = (0..dim).map(|_| drift_dist.sample(&mut rng)).collect();
        let mut mean = vec![0.0; dim];
        for &l in &labels {
            let p = &protos[l as usize * dim..(l as usize + 1) * dim];
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / labels.len() as f64;
            }
        }
        let mut data = Vec::with_capacity(frames * dim);
        for t in 0..frames {
            let ramp = if frames > 1 {
                t as f64 / (frames - 1) as f64 - 0.5
            } else {
                0.0
            };
            for c in 0..dim {
                let jitter = if config.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                data.push((mean[c] + ramp * drift[c] + jitter) as f32);
            }
        }
        records.push(VideoRecord::new(format!("vid{index:06}"), dim, data, labels)?);
    }
    Ok(Dataset {
        header: DatasetHeader {
            vocab_size: config.vocab_size,
            visual_dim: config.visual_dim,
            audio_dim: config.audio_dim,
            max_frames: config.max_frames,
            video_count: config.video_count as u64,
        },
        records,
    })
}
