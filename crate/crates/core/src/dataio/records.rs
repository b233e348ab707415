//! `FLVR` frame-level record files.
//!
//! ```text
//! header: "FLVR" | version u32 = 1 | vocab_size u32 | visual_dim u32
//!         | audio_dim u32 | max_frames u32 | video_count u64
//! video:  id_len u16 | id (UTF-8) | num_frames u16 | num_labels u16
//!         | labels u32 × num_labels (strictly increasing)
//!         | features f32 × num_frames × (visual_dim + audio_dim)
//! ```
//! All integers and floats are little-endian; features are frame-major with
//! the visual block before the audio block inside each frame.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::binio::{atomic_write, ByteReader, CountingWriter};
use crate::error::{Error, Result};

pub const RECORD_MAGIC: &[u8; 4] = b"FLVR";
pub const RECORD_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 4 + 4 * 5 + 8;

pub const DEFAULT_VISUAL_DIM: usize = 1024;
pub const DEFAULT_AUDIO_DIM: usize = 128;
pub const DEFAULT_MAX_FRAMES: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub vocab_size: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub max_frames: usize,
    pub video_count: u64,
}

impl DatasetHeader {
    pub fn feature_dim(&self) -> usize {
        self.visual_dim + self.audio_dim
    }

    fn validate(&self) -> Result<()> {
        let limit = u32::MAX as usize;
        if self.vocab_size == 0 || self.feature_dim() == 0 || self.max_frames == 0 {
            return Err(Error::Validation(format!("degenerate header {self:?}")));
        }
        if [self.vocab_size, self.visual_dim, self.audio_dim].iter().any(|&v| v > limit)
            || self.max_frames > u16::MAX as usize
        {
            return Err(Error::Validation(format!("header field out of range {self:?}")));
        }
        Ok(())
    }

    /// Check `record` against this header's bounds.
    pub fn check(&self, record: &VideoRecord) -> Result<()> {
        let id = &record.id;
        if id.len() > u16::MAX as usize {
            return Err(Error::Validation(format!("video id of {} bytes is too long", id.len())));
        }
        let t = record.num_frames();
        if t == 0 || t > self.max_frames {
            return Err(Error::Validation(format!(
                "video {id}: {t} frames outside [1, {}]",
                self.max_frames
            )));
        }
        if record.frames.len() != t * self.feature_dim() {
            return Err(Error::Validation(format!(
                "video {id}: {} feature values, expected {t}×{}",
                record.frames.len(),
                self.feature_dim()
            )));
        }
        if record.labels.len() > u16::MAX as usize {
            return Err(Error::Validation(format!("video {id}: too many labels")));
        }
        if record.labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!("video {id}: labels not strictly increasing")));
        }
        if let Some(&bad) = record.labels.iter().find(|&&l| l as usize >= self.vocab_size) {
            return Err(Error::Validation(format!(
                "video {id}: label {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        if record.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("video {id}: non-finite feature")));
        }
        Ok(())
    }
}

/// One video: frame-major features (`num_frames × feature_dim`) and its
/// sorted label set.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    feature_dim: usize,
    pub frames: Vec<f32>,
    pub labels: Vec<u32>,
}

impl VideoRecord {
    pub fn new(id: impl Into<String>, feature_dim: usize, frames: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if feature_dim == 0 || !frames.len().is_multiple_of(feature_dim) {
            return Err(Error::Validation(format!(
                "{} values do not split into frames of {feature_dim}",
                frames.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            feature_dim,
            frames,
            labels,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.feature_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.feature_dim..(t + 1) * self.feature_dim]
    }
}

/// A fully loaded record file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<VideoRecord>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let (header, reader) = read_records(path)?;
        let records = reader.collect::<Result<Vec<_>>>()?;
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<u64> {
        write_records(path, &self.header, &self.records)
    }
}

fn write_body<W: Write>(w: &mut CountingWriter<W>, header: &DatasetHeader, records: &[VideoRecord]) -> Result<()> {
    w.bytes(RECORD_MAGIC)?;
    w.u32(RECORD_VERSION)?;
    w.u32(header.vocab_size as u32)?;
    w.u32(header.visual_dim as u32)?;
    w.u32(header.audio_dim as u32)?;
    w.u32(header.max_frames as u32)?;
    w.u64(header.video_count)?;
    for r in records {
        w.u16(r.id.len() as u16)?;
        w.bytes(r.id.as_bytes())?;
        w.u16(r.num_frames() as u16)?;
        w.u16(r.labels.len() as u16)?;
        for &l in &r.labels {
            w.u32(l)?;
        }
        for &v in &r.frames {
            w.f32(v)?;
        }
    }
    Ok(())
}

/// Validate every record, then write the file atomically.
pub fn write_records(path: &Path, header: &DatasetHeader, records: &[VideoRecord]) -> Result<u64> {
    header.validate()?;
    if header.video_count != records.len() as u64 {
        return Err(Error::Validation(format!(
            "header declares {} videos, got {}",
            header.video_count,
            records.len()
        )));
    }
    for r in records {
        header.check(r)?;
    }
    atomic_write(path, |w| write_body(w, header, records))
}

/// Streaming reader over the videos of a record file.
pub struct RecordReader<R> {
    inner: ByteReader<R>,
    header: DatasetHeader,
    remaining: u64,
    failed: bool,
}

impl<R: Read> RecordReader<R> {
    pub fn new(source: R) -> Result<Self> {
        let mut inner = ByteReader::new(source);
        let magic: [u8; 4] = inner.array("magic")?;
        if &magic != RECORD_MAGIC {
            return Err(Error::Format(format!("bad record file magic {magic:?}")));
        }
        let version = inner.u32("version")?;
        if version != RECORD_VERSION {
            return Err(Error::Format(format!("unsupported record file version {version}")));
        }
        let header = DatasetHeader {
            vocab_size: inner.u32("vocab_size")? as usize,
            visual_dim: inner.u32("visual_dim")? as usize,
            audio_dim: inner.u32("audio_dim")? as usize,
            max_frames: inner.u32("max_frames")? as usize,
            video_count: inner.u64("video_count")?,
        };
        header.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            inner,
            header,
            remaining: header.video_count,
            failed: false,
        })
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    fn next_record(&mut self) -> Result<VideoRecord> {
        let start = self.inner.offset();
        let id_len = self.inner.u16("id length")? as usize;
        let id = self.inner.string(id_len, "video id")?;
        let num_frames = self.inner.u16("frame count")? as usize;
        let num_labels = self.inner.u16("label count")? as usize;
        let mut labels = Vec::with_capacity(num_labels);
        for _ in 0..num_labels {
            labels.push(self.inner.u32("label")?);
        }
        let dim = self.header.feature_dim();
        let frames = self.inner.f32_vec(num_frames * dim, "features")?;
        let record = VideoRecord::new(id, dim, frames, labels)?;
        self.header.check(&record).map_err(|e| Error::Corruption {
            offset: start,
            msg: e.to_string(),
        })?;
        Ok(record)
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<VideoRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.remaining == 0 {
            self.failed = true;
            return match self.inner.at_eof() {
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            };
        }
        let res = self.next_record();
        match res {
            Ok(_) => self.remaining -= 1,
            Err(_) => self.failed = true,
        }
        Some(res)
    }
}

/// Open a record file; videos are yielded lazily in file order.
pub fn read_records(path: &Path) -> Result<(DatasetHeader, RecordReader<BufReader<File>>)> {
    let reader = RecordReader::new(BufReader::new(File::open(path)?))?;
    Ok((reader.header(), reader))
}
