//! Checkpoint files.
//!
//! ```text
//! "FLCK" | version u32 = 1
//! spec:    kind u8 | vocab u32 | visual u32 | audio u32 | hidden u32 | depth u32
//!          | trb_count u32 | trb_filters u32 | fc_hidden u32 | vlad_clusters u32
//!          | fast_forward u8 | seed u64
//! tensors: count u32, then per tensor in declaration order:
//!          name_len u16 | name | trainable u8 | ndim u8 | dims u32 × ndim
//!          | values f64 × product(dims)
//! codebook: flag u8, followed by a codebook file body when 1
//! ```
//! Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::{Model, ModelKind, ModelSpec};
use crate::binio::{atomic_write, ByteReader, CountingWriter};
use crate::core_math::{ParamEntry, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::vlad::Codebook;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_count<W: Write>(w: &mut CountingWriter<W>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Validation(format!("{what} {v} does not fit in u32")))?;
    Ok(w.u32(v)?)
}

impl Model {
    fn write_to<W: Write>(&self, w: &mut CountingWriter<W>) -> Result<()> {
        let s = &self.spec;
        w.bytes(CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u8(s.kind.code())?;
        for (what, v) in [
            ("vocab_size", s.vocab_size),
            ("visual_dim", s.visual_dim),
            ("audio_dim", s.audio_dim),
            ("hidden_size", s.hidden_size),
            ("depth", s.depth),
            ("trb_count", s.trb_count),
            ("trb_filters", s.trb_filters),
            ("fc_hidden", s.fc_hidden),
            ("vlad_clusters", s.vlad_clusters),
        ] {
            write_count(w, v, what)?;
        }
        w.u8(u8::from(s.fast_forward))?;
        w.u64(s.seed)?;
        write_count(w, self.store.len(), "tensor count")?;
        for e in self.store.entries() {
            let name = e.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::Validation(format!("name `{}` too long", e.name)))?;
            w.u16(len)?;
            w.bytes(name)?;
            w.u8(u8::from(e.trainable))?;
            w.u8(e.tensor.ndim() as u8)?;
            for &d in e.tensor.shape() {
                write_count(w, d, "dimension")?;
            }
            for &v in e.tensor.data() {
                w.f64(v)?;
            }
        }
        match &self.codebook {
            Some(cb) => {
                w.u8(1)?;
                cb.write_to(w)?;
            }
            None => w.u8(0)?,
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut ByteReader<R>) -> Result<Self> {
        let magic: [u8; 4] = r.array("checkpoint magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = r.u32("checkpoint version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let code = r.u8("model kind")?;
        let kind = ModelKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown model kind code {code}")))?;
        let mut next = |what: &str| r.u32(what).map(|v| v as usize);
        let spec = ModelSpec {
            kind,
            vocab_size: next("vocab_size")?,
            visual_dim: next("visual_dim")?,
            audio_dim: next("audio_dim")?,
            hidden_size: next("hidden_size")?,
            depth: next("depth")?,
            trb_count: next("trb_count")?,
            trb_filters: next("trb_filters")?,
            fc_hidden: next("fc_hidden")?,
            vlad_clusters: next("vlad_clusters")?,
            fast_forward: r.u8("fast_forward")? != 0,
            seed: r.u64("seed")?,
        };
        let mut model = Model::new(spec).map_err(|e| Error::Format(format!("checkpoint spec: {e}")))?;
        let count = r.u32("tensor count")? as usize;
        if count != model.store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} tensors, model has {}",
                model.store.len()
            )));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u16("tensor name length")? as usize;
            let name = r.string(len, "tensor name")?;
            let trainable = r.u8("trainable flag")? != 0;
            let ndim = r.u8("ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32("dimension")? as usize);
            }
            let n: usize = shape.iter().product();
            let data = r.f64_vec(n, "tensor values")?;
            entries.push(ParamEntry {
                name,
                tensor: Tensor::new(&shape, data)?,
                trainable,
            });
        }
        model.load_store(ParamStore::from_entries(entries))?;
        match r.u8("codebook flag")? {
            0 => {}
            1 => model.set_codebook(Codebook::read_from(r)?)?,
            f => return Err(Error::Format(format!("bad codebook flag {f}"))),
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut CountingWriter::new(&mut buf))?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let m = Self::read_from(&mut r)?;
        r.at_eof()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<u64> {
        atomic_write(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(BufReader::new(File::open(path)?));
        let m = Self::read_from(&mut r)?;
        r.at_eof()?;
        Ok(m)
    }
}
