use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Mode, Model, ModelKind, ModelSpec};
use crate::core_math::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
use crate::core_math::{Graph, ParamId};
use crate::dataio::{pad_batch, Batch, DatasetHeader, VideoRecord};
use crate::error::Result;
use crate::exec::Execution;

/// Small dimensions for finite-difference checks.
pub fn toy_spec(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        vocab_size: 5,
        visual_dim: 4,
        audio_dim: 3,
        hidden_size: 4,
        depth: 3,
        trb_count: 2,
        trb_filters: 4,
        fc_hidden: 6,
        vlad_clusters: 3,
        fast_forward: true,
        seed: 11,
    }
}

/// Three ragged videos (lengths 4, 3, 2) with random features and labels,
/// plus a model for `spec` whose codebook (if any) is fit on them.
pub fn toy_batch(spec: &ModelSpec, seed: u64) -> Result<(Model, Batch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let header = DatasetHeader {
        vocab_size: spec.vocab_size,
        visual_dim: spec.visual_dim,
        audio_dim: spec.audio_dim,
        max_frames: 5,
        video_count: 3,
    };
    let dim = spec.feature_dim();
    let records = [4usize, 3, 2]
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let frames = (0..len * dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            let mut labels: Vec<u32> = (0..spec.vocab_size as u32).filter(|_| rng.random_bool(0.4)).collect();
            if labels.is_empty() {
                labels.push(i as u32 % spec.vocab_size as u32);
            }
            VideoRecord::new(format!("toy{i}"), dim, frames, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(spec.clone())?;
    model.prepare(&records, Execution::Sequential)?;
    let refs: Vec<&VideoRecord> = records.iter().collect();
    Ok((model, pad_batch(&header, &refs)?))
}

/// Finite-difference check of the train-mode BCE loss against every
/// trainable parameter block.
pub fn grad_check_model(model: &Model, batch: &Batch, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let ids: Vec<ParamId> = model.store().trainable_ids().collect();
    let names: Vec<String> = ids
        .iter()
        .map(|&id| model.store().entries()[id.index()].name.clone())
        .collect();
    let params: Vec<_> = ids.iter().map(|&id| model.store().get(id).clone()).collect();

    let mut g = Graph::new();
    let out = model.forward(&mut g, batch, Mode::Train)?;
    let loss = g.bce(out.probabilities, &batch.labels)?;
    g.backward(loss)?;
    let all = out.bound.grads(&g, model.store());
    let analytic: Vec<_> = ids.iter().map(|&id| all[id.index()].clone()).collect();

    let loss_at = |ps: &[crate::core_math::Tensor]| {
        let mut store = model.store().clone();
        for (&id, p) in ids.iter().zip(ps) {
            *store.get_mut(id) = p.clone();
        }
        let mut g = Graph::new();
        let out = model
            .forward_with(&store, &mut g, batch, Mode::Train)
            .expect("forward succeeded once");
        let loss = g.bce(out.probabilities, &batch.labels).expect("shapes checked");
        g.value(loss).data()[0]
    };
    Ok(check_gradients(&names, &params, &analytic, loss_at, config))
}
