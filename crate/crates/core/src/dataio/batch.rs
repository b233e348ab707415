use super::records::{DatasetHeader, VideoRecord};
use crate::core_math::{Tensor, TimeMask};
use crate::error::{Error, Result};

/// Zero-padded mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `[batch × visual_dim × time]`
    pub visual: Tensor,
    /// `[batch × audio_dim × time]`
    pub audio: Tensor,
    pub mask: TimeMask,
    /// Multi-hot `[batch × vocab]`.
    pub labels: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn time(&self) -> usize {
        self.mask.max_time()
    }

    pub fn visual_dim(&self) -> usize {
        self.visual.shape()[1]
    }

    pub fn audio_dim(&self) -> usize {
        self.audio.shape()[1]
    }

    /// Valid frames of item `i` as a row-major `len × (visual+audio)` matrix.
    pub fn item_frames(&self, i: usize) -> Vec<f64> {
        let (vd, ad, time) = (self.visual_dim(), self.audio_dim(), self.time());
        let len = self.mask.len_of(i);
        let mut out = Vec::with_capacity(len * (vd + ad));
        for t in 0..len {
            out.extend((0..vd).map(|c| self.visual.data()[(i * vd + c) * time + t]));
            out.extend((0..ad).map(|c| self.audio.data()[(i * ad + c) * time + t]));
        }
        out
    }

    /// The same batch on a longer time axis, with `fill` written at every
    /// padded frame (including the existing padding).
    pub fn padded_to(&self, time: usize, fill: f64) -> Result<Batch> {
        if time < self.time() {
            return Err(Error::Precondition(format!(
                "cannot shrink padded time {} to {time}",
                self.time()
            )));
        }
        let mask = self.mask.with_max_time(time)?;
        let extend = |x: &Tensor| {
            let s = x.shape();
            let (b, c, old) = (s[0], s[1], s[2]);
            let mut out = vec![fill; b * c * time];
            for i in 0..b {
                let len = mask.len_of(i);
                for j in 0..c {
                    let src = &x.data()[(i * c + j) * old..(i * c + j) * old + len];
                    out[(i * c + j) * time..(i * c + j) * time + len].copy_from_slice(src);
                }
            }
            Tensor::from_parts(vec![b, c, time], out)
        };
        Ok(Batch {
            ids: self.ids.clone(),
            visual: extend(&self.visual),
            audio: extend(&self.audio),
            mask,
            labels: self.labels.clone(),
        })
    }
}

/// Pad `records` to the longest one in the batch and split features into
/// visual and audio blocks.
pub fn pad_batch(header: &DatasetHeader, records: &[&VideoRecord]) -> Result<Batch> {
    if records.is_empty() {
        return Err(Error::Precondition("pad_batch of an empty batch".into()));
    }
    for r in records {
        header.check(r)?;
    }
    let (vd, ad, vocab) = (header.visual_dim, header.audio_dim, header.vocab_size);
    let b = records.len();
    let lengths: Vec<usize> = records.iter().map(|r| r.num_frames()).collect();
    let time = *lengths.iter().max().expect("non-empty");
    let mut visual = vec![0.0; b * vd * time];
    let mut audio = vec![0.0; b * ad * time];
    let mut labels = vec![0.0; b * vocab];
    for (i, r) in records.iter().enumerate() {
        for t in 0..r.num_frames() {
            let frame = r.frame(t);
            for c in 0..vd {
                visual[(i * vd + c) * time + t] = f64::from(frame[c]);
            }
            for c in 0..ad {
                audio[(i * ad + c) * time + t] = f64::from(frame[vd + c]);
            }
        }
        for &l in &r.labels {
            labels[i * vocab + l as usize] = 1.0;
        }
    }
    Ok(Batch {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        visual: Tensor::new(&[b, vd, time], visual)?,
        audio: Tensor::new(&[b, ad, time], audio)?,
        mask: TimeMask::new(time, lengths)?,
        labels: Tensor::new(&[b, vocab], labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> DatasetHeader {
        DatasetHeader {
            vocab_size: 6,
            visual_dim: 2,
            audio_dim: 1,
            max_frames: 8,
            video_count: 0,
        }
    }

    fn record(id: &str, frames: usize, labels: Vec<u32>) -> VideoRecord {
        let data = (0..frames * 3).map(|v| v as f32 + 1.0).collect();
        VideoRecord::new(id, 3, data, labels).unwrap()
    }

    #[test]
    fn single_record_no_padding() {
        let r = record("a", 3, vec![1]);
        let b = pad_batch(&header(), &[&r]).unwrap();
        assert_eq!(b.time(), 3);
        assert_eq!(b.visual.shape(), &[1, 2, 3]);
        assert_eq!(b.audio.data(), &[3.0, 6.0, 9.0]);
        assert_eq!(b.item_frames(0), (1..=9).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn ragged_lengths_zero_padded() {
        let (a, c) = (record("a", 2, vec![0, 4]), record("c", 5, vec![]));
        let b = pad_batch(&header(), &[&a, &c]).unwrap();
        assert_eq!(b.time(), 5);
        assert_eq!(b.mask.valid_lengths(), &[2, 5]);
        for ch in 0..2 {
            for t in 2..5 {
                assert_eq!(b.visual.at3(0, ch, t), 0.0);
            }
        }
        assert_eq!(&b.labels.data()[..6], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(pad_batch(&header(), &[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn padded_to_fills_only_padding() {
        let (a, c) = (record("a", 2, vec![0]), record("c", 3, vec![1]));
        let b = pad_batch(&header(), &[&a, &c]).unwrap();
        let p = b.padded_to(6, 7.5).unwrap();
        assert_eq!(p.mask.valid_lengths(), b.mask.valid_lengths());
        assert_eq!(p.item_frames(0), b.item_frames(0));
        assert_eq!(p.visual.at3(0, 1, 2), 7.5);
        assert_eq!(p.audio.at3(1, 0, 5), 7.5);
        assert!(b.padded_to(2, 0.0).is_err());
    }
}
