use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::{adam_step, AdamConfig, AdamState};
use super::predict::predict_probabilities;
use crate::binio::atomic_write;
use crate::core_math::Graph;
use crate::dataio::{pad_batch, Batch, Dataset, DatasetHeader, VideoRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{gap_at_k, topk_predictions, GapResult, PredictionSet, DEFAULT_TOP_K};
use crate::models::{Mode, Model, ModelSpec};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRIC_LOG: &str = "metrics.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Item-weighted mean of the per-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_gap: f64,
    /// Global gradient norm of every step, before clipping.
    pub grad_norms: Vec<f64>,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!("{}\t{:.6}\t{:.6}", self.epoch, self.train_loss, self.val_gap)
    }
}

/// Checks that a data file matches a model's input and label dimensions.
pub fn check_compatible(spec: &ModelSpec, header: &DatasetHeader, what: &str) -> Result<()> {
    if header.vocab_size != spec.vocab_size || header.visual_dim != spec.visual_dim || header.audio_dim != spec.audio_dim
    {
        return Err(Error::Config(format!(
            "{what} has vocab/visual/audio {}/{}/{}, model expects {}/{}/{}",
            header.vocab_size, header.visual_dim, header.audio_dim, spec.vocab_size, spec.visual_dim, spec.audio_dim
        )));
    }
    Ok(())
}

/// GAP@20 of `model` on `data`, counting every video's positives.
pub fn evaluate_model(model: &Model, data: &Dataset, batch_size: usize, execution: Execution) -> Result<GapResult> {
    let probs = predict_probabilities(model, data, batch_size, execution)?;
    let ids: Vec<String> = data.records.iter().map(|r| r.id.clone()).collect();
    let preds = topk_predictions(&probs, DEFAULT_TOP_K, &ids)?;
    let mut set = PredictionSet::default();
    for (p, r) in preds.into_iter().zip(&data.records) {
        set.push(p, r.labels.clone());
    }
    gap_at_k(&set, DEFAULT_TOP_K)
}

/// Epoch-at-a-time training loop with best-GAP retention.
pub struct Trainer {
    config: TrainConfig,
    adam: AdamConfig,
    model: Model,
    state: AdamState,
    train: Dataset,
    val: Option<Dataset>,
    rng: ChaCha8Rng,
    execution: Execution,
    history: Vec<EpochRecord>,
    best: Option<(f64, Model)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, train: Dataset, val: Option<Dataset>) -> Result<Self> {
        config.validate()?;
        check_compatible(&config.model, &train.header, "training data")?;
        if let Some(v) = &val {
            check_compatible(&config.model, &v.header, "validation data")?;
        }
        if train.records.is_empty() {
            return Err(Error::Config("training data holds no videos".into()));
        }
        let execution = Execution::default();
        let mut model = Model::new(config.model.clone())?;
        model.prepare(&train.records, execution)?;
        let state = AdamState::new(model.store());
        Ok(Self {
            adam: config.adam(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            model,
            state,
            train,
            val,
            execution,
            history: Vec::new(),
            best: None,
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn best_model(&self) -> Option<&Model> {
        self.best.as_ref().map(|(_, m)| m)
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.history.len() >= self.config.epochs
    }

    pub fn metric_log(&self) -> String {
        let mut s = String::new();
        for r in &self.history {
            writeln!(s, "{}", r.log_line()).expect("write to String");
        }
        s
    }

    fn batches(&mut self) -> Result<Vec<Batch>> {
        let mut order: Vec<usize> = (0..self.train.records.len()).collect();
        order.shuffle(&mut self.rng);
        let chunks: Vec<&[usize]> = order.chunks(self.config.batch_size).collect();
        let (header, records) = (&self.train.header, &self.train.records);
        self.execution
            .map(&chunks, |chunk| {
                let refs: Vec<&VideoRecord> = chunk.iter().map(|&i| &records[i]).collect();
                pad_batch(header, &refs)
            })
            .into_iter()
            .collect()
    }

    fn step(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let out = self.model.forward(&mut g, batch, Mode::Train)?;
        let loss = g.bce(out.probabilities, &batch.labels)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        let grads = out.bound.grads(&g, self.model.store());
        let norm = adam_step(self.model.store_mut(), &grads, &mut self.state, &self.adam)?;
        self.model.apply_bn_updates(&out.bn_updates);
        Ok((value, norm))
    }

    /// Run one epoch and validate.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord> {
        let batches = self.batches()?;
        let (mut loss_sum, mut items) = (0.0, 0usize);
        let mut grad_norms = Vec::with_capacity(batches.len());
        for batch in &batches {
            let (loss, norm) = self.step(batch)?;
            loss_sum += loss * batch.len() as f64;
            items += batch.len();
            grad_norms.push(norm);
        }
        let eval_data = self.val.as_ref().unwrap_or(&self.train);
        let gap = evaluate_model(&self.model, eval_data, self.config.batch_size, self.execution)?.gap;
        if self.best.as_ref().is_none_or(|(b, _)| gap > *b) {
            self.best = Some((gap, self.model.clone()));
        }
        self.history.push(EpochRecord {
            epoch: self.history.len() + 1,
            train_loss: loss_sum / items as f64,
            val_gap: gap,
            grad_norms,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step_epoch()?;
        }
        Ok(())
    }

    /// Write the best and final checkpoints and the metric log into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<TrainOutputs> {
        std::fs::create_dir_all(dir)?;
        let best = dir.join(BEST_CHECKPOINT);
        let last = dir.join(FINAL_CHECKPOINT);
        let log = dir.join(METRIC_LOG);
        self.best_model().unwrap_or(&self.model).save(&best)?;
        self.model.save(&last)?;
        let text = self.metric_log();
        atomic_write(&log, |w| {
            w.bytes(text.as_bytes())?;
            Ok(())
        })?;
        Ok(TrainOutputs {
            best_checkpoint: best,
            final_checkpoint: last,
            metric_log: log,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutputs {
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub metric_log: PathBuf,
}

/// Load data named by `config` (or the overrides), train, and write outputs.
pub fn train(config: &TrainConfig, data: Option<&Path>, out_dir: Option<&Path>) -> Result<TrainOutputs> {
    let data = data
        .or(config.data.as_deref())
        .ok_or_else(|| Error::Config("no training data path given".into()))?;
    let out_dir = out_dir
        .or(config.out_dir.as_deref())
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    config.validate()?;
    let train = Dataset::load(data)?;
    let val = config.val_data.as_deref().map(Dataset::load).transpose()?;
    let mut trainer = Trainer::new(config.clone(), train, val)?;
    trainer.run()?;
    trainer.write_outputs(out_dir)
}
