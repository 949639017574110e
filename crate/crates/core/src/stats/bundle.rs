//! `GNST` stats bundle:
//! magic | version u32 | class name (u32 length + UTF-8) | k u64 | d u32 | t u32 |
//! m (d × f64) | λ (t × f64) | V column-major (d·t × f64), all little-endian.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::latent_io::{write_atomic, ByteReader, MAX_DIMENSION};

use super::ClassStats;

pub const BUNDLE_MAGIC: [u8; 4] = *b"GNST";
pub const BUNDLE_VERSION: u32 = 1;

impl ClassStats {
    pub fn to_bytes(&self) -> Vec<u8> {
        let name = self.class().name().as_bytes();
        let d = self.dimension();
        let t = self.rank();
        let mut out = Vec::with_capacity(32 + name.len() + 8 * (d + t + d * t));
        out.extend_from_slice(&BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&self.sample_count().to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(t as u32).to_le_bytes());
        for v in self
            .mean()
            .iter()
            .chain(self.eigenvalues())
            .chain(self.eigenvectors().as_slice())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.array::<4>("magic")?;
        if magic != BUNDLE_MAGIC {
            return Err(Error::BadMagic {
                expected: BUNDLE_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("version")?;
        if version != BUNDLE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let name_len = r.u32("class name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "class name")?)
            .map_err(|e| Error::invalid(format!("class name is not UTF-8: {e}")))?;
        let class = name.parse()?;
        let k = r.u64("sample count")?;
        let d = r.u32("dimension")? as usize;
        let t = r.u32("rank")? as usize;
        if d == 0 || d > MAX_DIMENSION {
            return Err(Error::InvalidDimension(d));
        }
        if t > d {
            return Err(Error::invalid(format!("rank {t} exceeds dimension {d}")));
        }
        let floats = d + t + d * t;
        if r.remaining() < floats * 8 {
            return Err(Error::Truncated(format!(
                "stats payload needs {} bytes, {} available",
                floats * 8,
                r.remaining()
            )));
        }
        let mut read = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| r.f64("stats value")).collect() };
        let mean = read(d)?;
        let eigenvalues = read(t)?;
        let vectors = read(d * t)?;
        if r.remaining() != 0 {
            return Err(Error::invalid(format!(
                "{} trailing bytes in stats bundle",
                r.remaining()
            )));
        }
        ClassStats::new(
            class,
            k,
            mean,
            eigenvalues,
            DMatrix::from_column_slice(d, t, &vectors),
        )
    }
}

pub fn write_bundle(path: impl AsRef<Path>, stats: &ClassStats) -> Result<()> {
    write_atomic(path.as_ref(), &stats.to_bytes())
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<ClassStats> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ClassStats::from_bytes(&bytes)
}
