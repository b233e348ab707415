//! VLAD baseline: k-means codebook and signed-square-root, L2-normalized
//! residual encoding.

mod encode;
mod kmeans;

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

pub use encode::{normalize_residuals, residual_sums, vlad_encode, vlad_encode_many, DEGENERATE_NORM};
pub use kmeans::{kmeans_fit, KMeansFit};

use crate::binio::{atomic_write, ByteReader, CountingWriter};
use crate::error::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 256;
/// Frames drawn for codebook training.
pub const MAX_KMEANS_SAMPLES: usize = 100_000;

const CODEBOOK_MAGIC: &[u8; 4] = b"FLCB";
const CODEBOOK_VERSION: u32 = 1;

/// `k×d` row-major cluster centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    centers: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, d: usize, centers: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 || centers.len() != k * d {
            return Err(Error::dim("codebook", &[k, d], &[centers.len()]));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("codebook centers must be finite".into()));
        }
        Ok(Self { k, d, centers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, c: usize) -> &[f64] {
        &self.centers[c * self.d..(c + 1) * self.d]
    }

    pub(crate) fn write_to<W: Write>(&self, w: &mut CountingWriter<W>) -> Result<()> {
        w.bytes(CODEBOOK_MAGIC)?;
        w.u32(CODEBOOK_VERSION)?;
        w.u32(self.k as u32)?;
        w.u32(self.d as u32)?;
        for &v in &self.centers {
            w.f64(v)?;
        }
        Ok(())
    }

    pub(crate) fn read_from<R: Read>(r: &mut ByteReader<R>) -> Result<Self> {
        let magic: [u8; 4] = r.array("codebook magic")?;
        if &magic != CODEBOOK_MAGIC {
            return Err(Error::Format(format!("bad codebook magic {magic:?}")));
        }
        let version = r.u32("codebook version")?;
        if version != CODEBOOK_VERSION {
            return Err(Error::Format(format!("unsupported codebook version {version}")));
        }
        let k = r.u32("codebook k")? as usize;
        let d = r.u32("codebook d")? as usize;
        let centers = r.f64_vec(k * d, "codebook centers")?;
        Codebook::new(k, d, centers)
    }

    pub fn save(&self, path: &Path) -> Result<u64> {
        atomic_write(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = ByteReader::new(BufReader::new(File::open(path)?));
        let cb = Self::read_from(&mut r)?;
        r.at_eof()?;
        Ok(cb)
    }
}
