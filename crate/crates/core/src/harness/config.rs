use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::AdamConfig;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};

pub const CONFIG_VERSION: u32 = 1;
/// Clip norm used by default for fast-forward stacks of depth 4 or more.
pub const DEEP_STACK_CLIP_NORM: f64 = 5.0;
pub const DEEP_STACK_DEPTH: usize = 4;

/// Training run description, stored as TOML:
///
/// ```toml
/// version = 1
/// learning_rate = 0.001
/// batch_size = 16
/// epochs = 50
/// seed = 0
///
/// [model]
/// kind = "ff_lstm"
/// vocab_size = 10
/// depth = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub model: ModelSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Absent: kind-dependent default. Zero or negative: no clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            version: CONFIG_VERSION,
            model: ModelSpec::default(),
            learning_rate: adam.learning_rate,
            batch_size: 16,
            epochs: 10,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            clip_norm: None,
            seed: 0,
            data: None,
            val_data: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} {v} must lie in [0, 1)")))
            }
        };
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        self.model.validate()
    }

    pub fn effective_clip_norm(&self) -> Option<f64> {
        match self.clip_norm {
            Some(c) if c > 0.0 => Some(c),
            Some(_) => None,
            None => {
                let deep = self.model.depth >= DEEP_STACK_DEPTH;
                (matches!(self.model.kind, ModelKind::FfLstm | ModelKind::FfGru) && deep).then_some(DEEP_STACK_CLIP_NORM)
            }
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.effective_clip_norm(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_and_roundtrip() {
        let cfg = TrainConfig::from_toml(
            "version = 1\nepochs = 3\n[model]\nkind = \"ff_gru\"\nvocab_size = 7\ndepth = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.model.kind, ModelKind::FfGru);
        assert_eq!(cfg.model.vocab_size, 7);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.effective_clip_norm(), Some(5.0));
        let again = TrainConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_toml("version = 2\n").is_err());
        assert!(TrainConfig::from_toml("version = 1\nlearning_rate = 0.0\n").is_err());
        assert!(TrainConfig::from_toml("version = 1\nbatch_size = 0\n").is_err());
        assert!(TrainConfig::from_toml("version = 1\nepochs = 0\n").is_err());
        assert!(TrainConfig::from_toml("version = 1\nmistake = 1\n").is_err());
        assert!(TrainConfig::from_toml("version = 1\n[model]\nkind = \"cnn\"\n").is_err());
    }

    #[test]
    fn clip_defaults() {
        let mut cfg = TrainConfig::default();
        assert_eq!(cfg.effective_clip_norm(), None);
        cfg.model.kind = ModelKind::FfLstm;
        cfg.model.depth = 3;
        assert_eq!(cfg.effective_clip_norm(), None);
        cfg.model.depth = 7;
        assert_eq!(cfg.effective_clip_norm(), Some(5.0));
        cfg.clip_norm = Some(0.0);
        assert_eq!(cfg.effective_clip_norm(), None);
        cfg.clip_norm = Some(2.0);
        assert_eq!(cfg.adam().clip_norm, Some(2.0));
    }
}
