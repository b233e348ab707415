//! The seven classifier architectures, all ending in per-class sigmoids.

mod checkpoint;
mod gradcheck;
mod layers;
mod spec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check_model, toy_batch, toy_spec};
pub use layers::{BatchNormLayer, BiCell, BnUpdate, Conv1dLayer, Linear, MlpHead, Mode, TemporalBlock, TRB_WIDTH};
pub use spec::{ModelKind, ModelSpec};

use crate::core_math::{Graph, ParamStore, Tensor, TimeMask, Var};
use crate::dataio::{Batch, VideoRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::recurrent::{attention_pool, AttentionParams};
use crate::vlad::{kmeans_fit, vlad_encode, Codebook, MAX_KMEANS_SAMPLES};
use layers::Ctx;

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FastForwardLayer {
    pub rnn: BiCell,
    /// Absent in the plain stacked baseline.
    pub embed: Option<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    VideoLevel {
        head: MlpHead,
    },
    Vlad {
        head: MlpHead,
    },
    TwoStream {
        visual: BiCell,
        audio: BiCell,
        visual_attention: AttentionParams,
        audio_attention: AttentionParams,
        head: MlpHead,
    },
    FastForward {
        layers: Vec<FastForwardLayer>,
        attention: AttentionParams,
        head: MlpHead,
    },
    TemporalResnet {
        projection: Conv1dLayer,
        blocks: Vec<TemporalBlock>,
        rnn: BiCell,
        attention: AttentionParams,
        head: MlpHead,
    },
}

/// Output of one forward pass.
pub struct Forward {
    /// `[batch×vocab]` probabilities.
    pub probabilities: Var,
    pub bound: crate::core_math::Bound,
    /// Batch statistics to fold into running stats after a train step.
    pub bn_updates: Vec<BnUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    store: ParamStore,
    arch: Architecture,
    codebook: Option<Codebook>,
}

impl Model {
    /// Build with seeded parameters; the same spec always yields the same
    /// tensors.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut store = ParamStore::new();
        let s = &spec;
        let arch = match s.kind {
            ModelKind::VideoLevel => Architecture::VideoLevel {
                head: MlpHead::init(&mut store, s.feature_dim(), s.fc_sizes(), &mut rng),
            },
            ModelKind::VladMlp => Architecture::Vlad {
                head: MlpHead::init(&mut store, s.vlad_clusters * s.feature_dim(), s.fc_sizes(), &mut rng),
            },
            ModelKind::TwoStreamLstm | ModelKind::TwoStreamGru => {
                let cell = s.kind.cell_kind().expect("recurrent kind");
                let h = s.hidden_size;
                let visual = BiCell::init(&mut store, "visual.rnn", cell, s.visual_dim, h, &mut rng);
                let audio = BiCell::init(&mut store, "audio.rnn", cell, s.audio_dim, h, &mut rng);
                let visual_attention = AttentionParams::init(&mut store, "visual.attention", 2 * h, h, &mut rng);
                let audio_attention = AttentionParams::init(&mut store, "audio.attention", 2 * h, h, &mut rng);
                let head = MlpHead::init(&mut store, 4 * h, s.fc_sizes(), &mut rng);
                Architecture::TwoStream {
                    visual,
                    audio,
                    visual_attention,
                    audio_attention,
                    head,
                }
            }
            ModelKind::FfLstm | ModelKind::FfGru => {
                let cell = s.kind.cell_kind().expect("recurrent kind");
                let (h, width) = (s.hidden_size, s.ff_width());
                let mut layers = Vec::with_capacity(s.depth);
                let mut input = s.feature_dim();
                for i in 1..=s.depth {
                    let rnn = BiCell::init(&mut store, &format!("layer{i}.rnn"), cell, input, h, &mut rng);
                    let embed = s.fast_forward.then(|| {
                        Linear::init(&mut store, &format!("layer{i}.ff"), input + 2 * h, width, &mut rng)
                    });
                    layers.push(FastForwardLayer { rnn, embed });
                    input = width;
                }
                let attention = AttentionParams::init(&mut store, "attention", width, h, &mut rng);
                let head = MlpHead::init(&mut store, width, s.fc_sizes(), &mut rng);
                Architecture::FastForward {
                    layers,
                    attention,
                    head,
                }
            }
            ModelKind::TemporalResnet => {
                let (f, h) = (s.trb_filters, s.hidden_size);
                let projection = Conv1dLayer::init(&mut store, "projection", s.feature_dim(), f, 1, &mut rng);
                let blocks = (1..=s.trb_count)
                    .map(|i| TemporalBlock::init(&mut store, &format!("trb{i}"), f, &mut rng))
                    .collect();
                let rnn = BiCell::init(&mut store, "rnn", crate::recurrent::CellKind::Lstm, f, h, &mut rng);
                let attention = AttentionParams::init(&mut store, "attention", 2 * h, h, &mut rng);
                let head = MlpHead::init(&mut store, 2 * h, s.fc_sizes(), &mut rng);
                Architecture::TemporalResnet {
                    projection,
                    blocks,
                    rnn,
                    attention,
                    head,
                }
            }
        };
        Ok(Self {
            spec,
            store,
            arch,
            codebook: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.codebook.as_ref()
    }

    pub fn needs_codebook(&self) -> bool {
        self.spec.kind == ModelKind::VladMlp
    }

    pub fn set_codebook(&mut self, codebook: Codebook) -> Result<()> {
        if !self.needs_codebook() {
            return Err(Error::Config(format!("{} does not use a codebook", self.spec.kind)));
        }
        if codebook.k() != self.spec.vlad_clusters || codebook.d() != self.spec.feature_dim() {
            return Err(Error::dim(
                "set_codebook",
                &[codebook.k(), codebook.d()],
                &[self.spec.vlad_clusters, self.spec.feature_dim()],
            ));
        }
        self.codebook = Some(codebook);
        Ok(())
    }

    /// Fit the VLAD codebook on a seeded subsample of the frames in
    /// `records`. No-op for other kinds.
    pub fn prepare(&mut self, records: &[VideoRecord], execution: Execution) -> Result<()> {
        if !self.needs_codebook() {
            return Ok(());
        }
        let d = self.spec.feature_dim();
        let index: Vec<(usize, usize)> = records
            .iter()
            .enumerate()
            .flat_map(|(r, rec)| (0..rec.num_frames()).map(move |t| (r, t)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(3);
        let take = index.len().min(MAX_KMEANS_SAMPLES);
        let mut picked = sample(&mut rng, index.len(), take).into_vec();
        picked.sort_unstable();
        let mut samples = Vec::with_capacity(take * d);
        for i in picked {
            let (r, t) = index[i];
            let frame = records[r].frame(t);
            if frame.len() != d {
                return Err(Error::dim("prepare", &[frame.len()], &[d]));
            }
            samples.extend(frame.iter().map(|&v| f64::from(v)));
        }
        let fit = kmeans_fit(
            &samples,
            d,
            self.spec.vlad_clusters,
            KMEANS_MAX_ITER,
            self.spec.seed,
            execution,
        )?;
        self.set_codebook(fit.codebook)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.visual_dim() != self.spec.visual_dim || batch.audio_dim() != self.spec.audio_dim {
            return Err(Error::dim(
                "model input",
                &[batch.visual_dim(), batch.audio_dim()],
                &[self.spec.visual_dim, self.spec.audio_dim],
            ));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<Forward> {
        self.forward_with(&self.store, g, batch, mode)
    }

    /// Forward pass with an alternative parameter store of identical layout.
    pub fn forward_with(&self, store: &ParamStore, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<Forward> {
        self.check_batch(batch)?;
        if store.len() != self.store.len() {
            return Err(Error::dim("forward_with", &[store.len()], &[self.store.len()]));
        }
        let bound = store.bind(g);
        let mut ctx = Ctx {
            g,
            bound,
            store,
            mode,
            bn_updates: Vec::new(),
        };
        let mask = &batch.mask;
        let probabilities = match &self.arch {
            Architecture::VideoLevel { head } => {
                let x = features(&mut ctx, batch)?;
                let pooled = ctx.g.masked_mean_time(x, mask)?;
                head.forward(&mut ctx, pooled)?
            }
            Architecture::Vlad { head } => {
                let codebook = self
                    .codebook
                    .as_ref()
                    .ok_or_else(|| Error::State("vlad_mlp model has no fitted codebook".into()))?;
                let mut enc = Vec::with_capacity(batch.len() * codebook.k() * codebook.d());
                for i in 0..batch.len() {
                    enc.extend(vlad_encode(codebook, &batch.item_frames(i))?);
                }
                let x = ctx.g.constant(Tensor::new(&[batch.len(), codebook.k() * codebook.d()], enc)?);
                head.forward(&mut ctx, x)?
            }
            Architecture::TwoStream {
                visual,
                audio,
                visual_attention,
                audio_attention,
                head,
            } => {
                let v = ctx.g.constant(batch.visual.clone());
                let v = ctx.g.mask_time(v, mask)?;
                let a = ctx.g.constant(batch.audio.clone());
                let a = ctx.g.mask_time(a, mask)?;
                let hv = visual.forward(&mut ctx, v, mask)?;
                let ha = audio.forward(&mut ctx, a, mask)?;
                let pv = pool(&mut ctx, visual_attention, hv, mask)?;
                let pa = pool(&mut ctx, audio_attention, ha, mask)?;
                let fused = ctx.g.concat_channels(&[pv, pa])?;
                head.forward(&mut ctx, fused)?
            }
            Architecture::FastForward {
                layers,
                attention,
                head,
            } => {
                let mut f = features(&mut ctx, batch)?;
                for layer in layers {
                    let h = layer.rnn.forward(&mut ctx, f, mask)?;
                    f = match &layer.embed {
                        Some(embed) => {
                            let joined = ctx.g.concat_channels(&[f, h])?;
                            let y = embed.forward_frames(&mut ctx, joined)?;
                            let y = ctx.g.relu(y);
                            ctx.g.mask_time(y, mask)?
                        }
                        None => h,
                    };
                }
                let pooled = pool(&mut ctx, attention, f, mask)?;
                head.forward(&mut ctx, pooled)?
            }
            Architecture::TemporalResnet {
                projection,
                blocks,
                rnn,
                attention,
                head,
            } => {
                let x = features(&mut ctx, batch)?;
                let y = projection.forward(&mut ctx, x)?;
                let mut y = ctx.g.mask_time(y, mask)?;
                for block in blocks {
                    y = block.forward(&mut ctx, y, mask)?;
                }
                let h = rnn.forward(&mut ctx, y, mask)?;
                let pooled = pool(&mut ctx, attention, h, mask)?;
                head.forward(&mut ctx, pooled)?
            }
        };
        Ok(Forward {
            probabilities,
            bound: ctx.bound,
            bn_updates: ctx.bn_updates,
        })
    }

    /// Eval-mode probabilities `[batch×vocab]`.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch, Mode::Eval)?;
        Ok(g.value(out.probabilities).clone())
    }

    /// Fold train-mode batch statistics into the running estimates.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) {
        for u in updates {
            u.layer.apply(&mut self.store, &u.stats);
        }
    }

    /// Replace every tensor; names, order and shapes must match.
    pub fn load_store(&mut self, store: ParamStore) -> Result<()> {
        if store.len() != self.store.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                self.store.len(),
                store.len()
            )));
        }
        for (want, got) in self.store.entries().iter().zip(store.entries()) {
            if want.name != got.name || want.tensor.shape() != got.tensor.shape() || want.trainable != got.trainable {
                return Err(Error::Format(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name,
                    got.tensor.shape(),
                    want.name,
                    want.tensor.shape()
                )));
            }
        }
        self.store = store;
        Ok(())
    }
}

/// Visual and audio blocks concatenated on the channel axis, zeroed at
/// padded frames.
fn features(ctx: &mut Ctx<'_>, batch: &Batch) -> Result<Var> {
    let v = ctx.g.constant(batch.visual.clone());
    let a = ctx.g.constant(batch.audio.clone());
    let x = ctx.g.concat_channels(&[v, a])?;
    ctx.g.mask_time(x, &batch.mask)
}

fn pool(ctx: &mut Ctx<'_>, att: &AttentionParams, h: Var, mask: &TimeMask) -> Result<Var> {
    let vars = att.bind(&ctx.bound);
    attention_pool(ctx.g, &vars, h, mask)
}
