use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::train::check_compatible;
use crate::core_math::Tensor;
use crate::dataio::{pad_batch, Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{
    gap_at_k, read_predictions, topk_predictions, write_predictions, GapResult, PredictionSet, VideoPrediction,
    DEFAULT_TOP_K,
};
use crate::models::Model;

/// Batch size used by file-level prediction.
pub const PREDICT_BATCH: usize = 32;

/// Eval-mode probabilities `[videos×vocab]` in record order.
pub fn predict_probabilities(model: &Model, data: &Dataset, batch_size: usize, execution: Execution) -> Result<Tensor> {
    check_compatible(model.spec(), &data.header, "data")?;
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let refs: Vec<&VideoRecord> = data.records.iter().collect();
    let chunks: Vec<&[&VideoRecord]> = refs.chunks(batch_size).collect();
    let parts = execution.map(&chunks, |chunk| {
        let batch = pad_batch(&data.header, chunk)?;
        model.predict(&batch)
    });
    let vocab = model.spec().vocab_size;
    let mut out = Vec::with_capacity(data.records.len() * vocab);
    for p in parts {
        out.extend_from_slice(p?.data());
    }
    Tensor::new(&[data.records.len(), vocab], out)
}

/// Ranked predictions: top-20, or every class with `full_scores`.
pub fn predict_dataset(model: &Model, data: &Dataset, full_scores: bool, execution: Execution) -> Result<Vec<VideoPrediction>> {
    let probs = predict_probabilities(model, data, PREDICT_BATCH, execution)?;
    let k = if full_scores {
        model.spec().vocab_size
    } else {
        DEFAULT_TOP_K
    };
    let ids: Vec<String> = data.records.iter().map(|r| r.id.clone()).collect();
    topk_predictions(&probs, k, &ids)
}

pub fn predict_file(checkpoint: &Path, data: &Path, out: &Path, full_scores: bool) -> Result<usize> {
    let model = Model::load(checkpoint)?;
    let data = Dataset::load(data)?;
    let preds = predict_dataset(&model, &data, full_scores, Execution::default())?;
    write_predictions(out, &preds)?;
    Ok(preds.len())
}

/// Join predictions with ground truth and compute GAP@20.
///
/// Videos in `data` without a prediction still contribute their positives.
pub fn evaluate(preds: &[VideoPrediction], data: &Dataset) -> Result<GapResult> {
    let truth: HashMap<&str, &VideoRecord> = data.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut set = PredictionSet::default();
    let mut seen = HashSet::new();
    for p in preds {
        let record = truth
            .get(p.id.as_str())
            .ok_or_else(|| Error::Input(format!("predicted video `{}` is not in the data", p.id)))?;
        if let Some(&(c, _)) = p.ranked.iter().find(|(c, _)| *c as usize >= data.header.vocab_size) {
            return Err(Error::Input(format!("video `{}`: class {c} outside vocabulary", p.id)));
        }
        seen.insert(p.id.as_str());
        set.push(p.clone(), record.labels.clone());
    }
    for r in &data.records {
        if !seen.contains(r.id.as_str()) {
            set.push(
                VideoPrediction {
                    id: r.id.clone(),
                    ranked: Vec::new(),
                },
                r.labels.clone(),
            );
        }
    }
    gap_at_k(&set, DEFAULT_TOP_K)
}

pub fn evaluate_file(predictions: &Path, data: &Path) -> Result<GapResult> {
    evaluate(&read_predictions(predictions)?, &Dataset::load(data)?)
}

/// Per-class weighted mean over prediction lists for the same videos.
///
/// Output follows the first input's video order. Within a video, classes
/// are ordered by descending mean score; ties keep the first input's order.
/// With `k`, each list is truncated to its top `k` classes.
pub fn ensemble_average(
    inputs: &[Vec<VideoPrediction>],
    weights: Option<&[f64]>,
    k: Option<usize>,
) -> Result<Vec<VideoPrediction>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Input("ensemble needs at least one prediction file".into()))?;
    let uniform = vec![1.0; inputs.len()];
    let weights = weights.unwrap_or(&uniform);
    if weights.len() != inputs.len() {
        return Err(Error::Config(format!(
            "{} weights for {} prediction files",
            weights.len(),
            inputs.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("weights must be finite, non-negative and not all zero".into()));
    }
    let total: f64 = weights.iter().sum();
    let maps: Vec<HashMap<&str, &VideoPrediction>> = inputs
        .iter()
        .map(|preds| preds.iter().map(|p| (p.id.as_str(), p)).collect())
        .collect();
    let base: HashSet<&str> = maps[0].keys().copied().collect();
    for (i, m) in maps.iter().enumerate().skip(1) {
        let other: HashSet<&str> = m.keys().copied().collect();
        if other != base {
            let mut missing: Vec<&str> = base.difference(&other).copied().collect();
            let mut extra: Vec<&str> = other.difference(&base).copied().collect();
            missing.sort_unstable();
            extra.sort_unstable();
            return Err(Error::Input(format!(
                "input {} video set differs: missing {missing:?}, extra {extra:?}",
                i + 1
            )));
        }
    }
    if k == Some(0) {
        return Err(Error::Config("ensemble k must be >= 1".into()));
    }
    first
        .iter()
        .map(|p| {
            let scores: Vec<HashMap<u32, f64>> = maps.iter().map(|m| m[p.id.as_str()].ranked.iter().copied().collect()).collect();
            let mut ranked = Vec::with_capacity(p.ranked.len());
            for &(c, _) in &p.ranked {
                let mut sum = 0.0;
                for (i, s) in scores.iter().enumerate() {
                    let v = s.get(&c).ok_or_else(|| {
                        Error::Input(format!("video `{}`: class {c} missing from input {}", p.id, i + 1))
                    })?;
                    sum += weights[i] * v;
                }
                ranked.push((c, sum / total));
            }
            if scores.iter().any(|s| s.len() != p.ranked.len()) {
                return Err(Error::Input(format!("video `{}`: class sets differ between inputs", p.id)));
            }
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            if let Some(k) = k {
                ranked.truncate(k);
            }
            Ok(VideoPrediction {
                id: p.id.clone(),
                ranked,
            })
        })
        .collect()
}

pub fn ensemble_files(inputs: &[&Path], weights: Option<&[f64]>, out: &Path, full_scores: bool) -> Result<usize> {
    let lists = inputs.iter().map(|p| read_predictions(p)).collect::<Result<Vec<_>>>()?;
    let k = (!full_scores).then_some(DEFAULT_TOP_K);
    let merged = ensemble_average(&lists, weights, k)?;
    write_predictions(out, &merged)?;
    Ok(merged.len())
}
