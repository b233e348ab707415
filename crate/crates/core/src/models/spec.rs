use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{DEFAULT_AUDIO_DIM, DEFAULT_VISUAL_DIM};
use crate::error::{Error, Result};
use crate::recurrent::CellKind;
use crate::vlad::DEFAULT_CLUSTERS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    VideoLevel,
    VladMlp,
    TwoStreamLstm,
    TwoStreamGru,
    FfLstm,
    FfGru,
    TemporalResnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::VideoLevel,
        ModelKind::VladMlp,
        ModelKind::TwoStreamLstm,
        ModelKind::TwoStreamGru,
        ModelKind::FfLstm,
        ModelKind::FfGru,
        ModelKind::TemporalResnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::VideoLevel => "video_level",
            ModelKind::VladMlp => "vlad_mlp",
            ModelKind::TwoStreamLstm => "two_stream_lstm",
            ModelKind::TwoStreamGru => "two_stream_gru",
            ModelKind::FfLstm => "ff_lstm",
            ModelKind::FfGru => "ff_gru",
            ModelKind::TemporalResnet => "temporal_resnet",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Recurrent cell used by the sequence models.
    pub fn cell_kind(self) -> Option<CellKind> {
        match self {
            ModelKind::TwoStreamLstm | ModelKind::FfLstm | ModelKind::TemporalResnet => Some(CellKind::Lstm),
            ModelKind::TwoStreamGru | ModelKind::FfGru => Some(CellKind::Gru),
            ModelKind::VideoLevel | ModelKind::VladMlp => None,
        }
    }

    pub fn is_fast_forward(self) -> bool {
        matches!(self, ModelKind::FfLstm | ModelKind::FfGru)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Declarative description of one classifier.
///
/// Fields that a kind does not use are ignored. The classifier head is
/// `FC(fc_hidden) → ReLU → FC(vocab_size) → sigmoid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub hidden_size: usize,
    pub depth: usize,
    pub trb_count: usize,
    pub trb_filters: usize,
    pub fc_hidden: usize,
    pub vlad_clusters: usize,
    /// Fast-forward kinds only: `false` gives a plain stacked bidirectional
    /// network with the same depth, used as a comparison baseline.
    pub fast_forward: bool,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::TwoStreamLstm,
            vocab_size: 25,
            visual_dim: DEFAULT_VISUAL_DIM,
            audio_dim: DEFAULT_AUDIO_DIM,
            hidden_size: 64,
            depth: 1,
            trb_count: 9,
            trb_filters: 1024,
            fc_hidden: 512,
            vlad_clusters: DEFAULT_CLUSTERS,
            fast_forward: true,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, vocab_size: usize) -> Self {
        Self {
            kind,
            vocab_size,
            ..Self::default()
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.visual_dim + self.audio_dim
    }

    pub fn fc_sizes(&self) -> [usize; 2] {
        [self.fc_hidden, self.vocab_size]
    }

    /// Width of the per-frame fast-forward embedding.
    pub fn ff_width(&self) -> usize {
        2 * self.hidden_size
    }

    /// Checks only the fields the kind uses.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be >= 1 for {}", self.kind)))
            } else {
                Ok(())
            }
        };
        positive("vocab_size", self.vocab_size)?;
        positive("fc_hidden", self.fc_hidden)?;
        positive("visual_dim + audio_dim", self.feature_dim())?;
        match self.kind {
            ModelKind::VideoLevel => {}
            ModelKind::VladMlp => positive("vlad_clusters", self.vlad_clusters)?,
            ModelKind::TwoStreamLstm | ModelKind::TwoStreamGru => {
                positive("hidden_size", self.hidden_size)?;
                positive("visual_dim", self.visual_dim)?;
                positive("audio_dim", self.audio_dim)?;
            }
            ModelKind::FfLstm | ModelKind::FfGru => {
                positive("hidden_size", self.hidden_size)?;
                positive("depth", self.depth)?;
            }
            ModelKind::TemporalResnet => {
                positive("hidden_size", self.hidden_size)?;
                positive("trb_count", self.trb_count)?;
                positive("trb_filters", self.trb_filters)?;
            }
        }
        Ok(())
    }
}
