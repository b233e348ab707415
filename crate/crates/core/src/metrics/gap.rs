use std::cmp::Ordering;
use std::collections::HashSet;

use crate::core_math::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 20;

/// Ranked `(class, score)` pairs for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub id: String,
    pub ranked: Vec<(u32, f64)>,
}

/// A prediction joined with its ground-truth label set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredVideo {
    pub prediction: VideoPrediction,
    pub truth: Vec<u32>,
}

/// Videos in evaluation order; position is the first tie-break after score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub videos: Vec<ScoredVideo>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapResult {
    pub gap: f64,
    pub pooled_pairs: usize,
    pub total_positives: usize,
}

impl PredictionSet {
    pub fn push(&mut self, prediction: VideoPrediction, truth: Vec<u32>) {
        self.videos.push(ScoredVideo { prediction, truth });
    }

    pub fn total_positives(&self) -> usize {
        self.videos.iter().map(|v| v.truth.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        for v in &self.videos {
            let p = &v.prediction;
            let mut seen = HashSet::new();
            for &(c, s) in &p.ranked {
                if !seen.insert(c) {
                    return Err(Error::Validation(format!("video {}: class {c} listed twice", p.id)));
                }
                if !s.is_finite() {
                    return Err(Error::Validation(format!("video {}: non-finite score", p.id)));
                }
            }
        }
        Ok(())
    }
}

/// Descending score, then ascending class.
fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::Config("GAP needs k >= 1".into()));
    }
    Ok(())
}

/// Global average precision over the pooled top-`k` pairs of every video.
///
/// Pooled pairs are ordered by descending score, then video position, then
/// class index. The denominator is the total number of ground-truth
/// positives, so positives missing from every top-`k` list count as misses.
pub fn gap_at_k(preds: &PredictionSet, k: usize) -> Result<GapResult> {
    check_k(k)?;
    preds.validate()?;
    // (score, video, class, hit)
    let mut pooled: Vec<(f64, usize, u32, bool)> = Vec::new();
    for (vi, v) in preds.videos.iter().enumerate() {
        let mut ranked = v.prediction.ranked.clone();
        ranked.sort_by(rank_order);
        ranked.truncate(k);
        let truth: HashSet<u32> = v.truth.iter().copied().collect();
        pooled.extend(ranked.into_iter().map(|(c, s)| (s, vi, c, truth.contains(&c))));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let total_positives = preds.total_positives();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, p) in pooled.iter().enumerate() {
        if p.3 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let gap = if total_positives == 0 {
        0.0
    } else {
        sum / total_positives as f64
    };
    Ok(GapResult {
        gap,
        pooled_pairs: pooled.len(),
        total_positives,
    })
}

/// Reference GAP: repeated selection of the best remaining pair and a full
/// recount of hits at each position. Quadratic; for small instances only.
pub fn gap_oracle(preds: &PredictionSet, k: usize) -> GapResult {
    let better = |a: (f64, usize, u32), b: (f64, usize, u32)| {
        a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
    };
    let mut remaining: Vec<(f64, usize, u32)> = Vec::new();
    for (vi, v) in preds.videos.iter().enumerate() {
        let mut pool: Vec<(f64, usize, u32)> = v.prediction.ranked.iter().map(|&(c, s)| (s, vi, c)).collect();
        for _ in 0..k.min(pool.len()) {
            let best = (0..pool.len())
                .reduce(|i, j| if better(pool[j], pool[i]) { j } else { i })
                .expect("non-empty");
            remaining.push(pool.remove(best));
        }
    }
    let mut ordered = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = (0..remaining.len())
            .reduce(|i, j| if better(remaining[j], remaining[i]) { j } else { i })
            .expect("non-empty");
        ordered.push(remaining.remove(best));
    }
    let is_hit = |p: &(f64, usize, u32)| preds.videos[p.1].truth.contains(&p.2);
    let m: usize = preds.videos.iter().map(|v| v.truth.len()).sum();
    let mut sum = 0.0;
    for i in 0..ordered.len() {
        if is_hit(&ordered[i]) {
            let hits_so_far = ordered[..=i].iter().filter(|p| is_hit(p)).count();
            sum += hits_so_far as f64 / (i + 1) as f64;
        }
    }
    GapResult {
        gap: if m == 0 { 0.0 } else { sum / m as f64 },
        pooled_pairs: ordered.len(),
        total_positives: m,
    }
}

/// Top-`k` classes per row of `[batch×vocab]` probabilities, ties broken by
/// ascending class index. `k` larger than the vocabulary returns every class.
pub fn topk_predictions(probabilities: &Tensor, k: usize, video_ids: &[String]) -> Result<Vec<VideoPrediction>> {
    check_k(k)?;
    let s = probabilities.shape();
    if s.len() != 2 || s[0] != video_ids.len() {
        return Err(Error::dim("topk_predictions", s, &[video_ids.len()]));
    }
    let vocab = s[1];
    Ok(video_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let row = &probabilities.data()[i * vocab..(i + 1) * vocab];
            let mut ranked: Vec<(u32, f64)> = row.iter().enumerate().map(|(c, &p)| (c as u32, p)).collect();
            ranked.sort_by(rank_order);
            ranked.truncate(k);
            VideoPrediction {
                id: id.clone(),
                ranked,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(id: &str, ranked: &[(u32, f64)], truth: &[u32]) -> ScoredVideo {
        ScoredVideo {
            prediction: VideoPrediction {
                id: id.into(),
                ranked: ranked.to_vec(),
            },
            truth: truth.to_vec(),
        }
    }

    fn set(videos: Vec<ScoredVideo>) -> PredictionSet {
        PredictionSet { videos }
    }

    #[test]
    fn hand_examples() {
        let perfect = set(vec![video("a", &[(3, 0.9), (7, 0.8), (1, 0.1)], &[3, 7])]);
        assert_eq!(gap_at_k(&perfect, 20).unwrap().gap, 1.0);

        let second = set(vec![video("a", &[(2, 0.9), (5, 0.8)], &[5])]);
        assert_eq!(gap_at_k(&second, 20).unwrap().gap, 0.5);

        let two = set(vec![
            video("v1", &[(0, 0.9)], &[0]),
            video("v2", &[(0, 0.8), (1, 0.7)], &[1]),
        ]);
        let r = gap_at_k(&two, 20).unwrap();
        assert!((r.gap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r, gap_oracle(&two, 20));
    }

    #[test]
    fn degenerate_cases() {
        let empty_preds = set(vec![video("a", &[], &[1, 2])]);
        assert_eq!(gap_at_k(&empty_preds, 20).unwrap().gap, 0.0);
        let no_truth = set(vec![video("a", &[(1, 0.5)], &[])]);
        assert_eq!(gap_at_k(&no_truth, 20).unwrap().gap, 0.0);
        assert_eq!(gap_oracle(&no_truth, 20).gap, 0.0);
        assert!(matches!(gap_at_k(&no_truth, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ties_follow_video_then_class_order() {
        let tied = set(vec![
            video("a", &[(1, 0.5), (0, 0.5)], &[1]),
            video("b", &[(0, 0.5)], &[0]),
        ]);
        // pooled order: (a,0) miss, (a,1) hit, (b,0) hit
        let r = gap_at_k(&tied, 20).unwrap();
        assert_eq!(r.gap, (0.5 + 2.0 / 3.0) / 2.0);
        assert_eq!(r, gap_oracle(&tied, 20));
    }

    #[test]
    fn truncation_to_k() {
        let s = set(vec![video("a", &[(0, 0.9), (1, 0.8), (2, 0.7)], &[2])]);
        assert_eq!(gap_at_k(&s, 2).unwrap().gap, 0.0);
        assert_eq!(gap_at_k(&s, 2).unwrap().pooled_pairs, 2);
        assert_eq!(gap_at_k(&s, 3).unwrap().gap, 1.0 / 3.0);
    }

    #[test]
    fn topk_examples() {
        let ids = vec!["x".to_string()];
        let p = Tensor::new(&[1, 3], vec![0.1, 0.9, 0.5]).unwrap();
        let classes = |k| {
            topk_predictions(&p, k, &ids).unwrap()[0]
                .ranked
                .iter()
                .map(|r| r.0)
                .collect::<Vec<_>>()
        };
        assert_eq!(classes(2), vec![1, 2]);
        assert_eq!(classes(3), vec![1, 2, 0]);
        assert_eq!(classes(20), vec![1, 2, 0]);
        let flat = Tensor::full(&[1, 4], 0.3);
        let r = topk_predictions(&flat, 2, &ids).unwrap();
        assert_eq!(r[0].ranked, vec![(0, 0.3), (1, 0.3)]);
    }

    #[test]
    fn duplicate_class_rejected() {
        let s = set(vec![video("a", &[(0, 0.9), (0, 0.8)], &[0])]);
        assert!(matches!(gap_at_k(&s, 20), Err(Error::Validation(_))));
    }
}
