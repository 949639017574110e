//! Latent vector containers and their on-disk formats.
//!
//! The binary store layout is
//!
//! ```text
//! "GNLZ" | version u32 | d u32 | count u64 | count × (id u64, d × f64) | len u32 | manifest JSON
//! ```
//!
//! with every integer and float little-endian.

mod csv_io;

pub use csv_io::{export_csv, import_csv};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"GNLZ";
pub const STORE_VERSION: u32 = 1;
pub const MAX_DIMENSION: usize = 65_536;

/// One point of the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    /// Builds a vector, rejecting empty input and non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(component) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: 0,
                component,
            });
        }
        Ok(LatentVector(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        LatentVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Free-form provenance carried alongside a store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub source: String,
    /// Which latent space the vectors live in (for example "Z" or "W"), when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub vector: LatentVector,
}

/// An immutable, id-ordered collection of latent vectors of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStore {
    dimension: usize,
    records: Vec<Record>,
    pub manifest: Manifest,
}

impl LatentStore {
    pub fn new(dimension: usize, manifest: Manifest) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::InvalidDimension(dimension));
        }
        Ok(LatentStore {
            dimension,
            records: Vec::new(),
            manifest,
        })
    }

    /// Builds a store from `(id, vector)` pairs, checking every invariant.
    pub fn from_records(
        dimension: usize,
        records: Vec<Record>,
        manifest: Manifest,
    ) -> Result<Self> {
        let mut store = LatentStore::new(dimension, manifest)?;
        for r in records {
            store.push(r.id, r.vector)?;
        }
        Ok(store)
    }

    /// Builds a store with sequential ids `0..n`.
    pub fn from_vectors(
        dimension: usize,
        vectors: impl IntoIterator<Item = LatentVector>,
        manifest: Manifest,
    ) -> Result<Self> {
        let mut store = LatentStore::new(dimension, manifest)?;
        for (id, v) in vectors.into_iter().enumerate() {
            store.push(id as u64, v)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, id: u64, vector: LatentVector) -> Result<()> {
        if vector.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: vector.dim(),
            });
        }
        if let Some(last) = self.records.last() {
            if id <= last.id {
                return Err(Error::IdOrder { prev: last.id, id });
            }
        }
        self.records.push(Record { id, vector });
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&LatentVector> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i].vector)
    }

    pub fn vectors(&self) -> impl Iterator<Item = &LatentVector> {
        self.records.iter().map(|r| &r.vector)
    }

    /// Serializes the store to the binary layout described at module level.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out =
            Vec::with_capacity(20 + self.records.len() * (8 + 8 * self.dimension) + 4 + manifest.len());
        out.extend_from_slice(&STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.id.to_le_bytes());
            for v in r.vector.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.array::<4>("magic")?;
        if magic != STORE_MAGIC {
            return Err(Error::BadMagic {
                expected: STORE_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dimension = r.u32("dimension")? as usize;
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::InvalidDimension(dimension));
        }
        let count = r.u64("count")?;
        let record_len = 8 + 8 * dimension as u64;
        if count.saturating_mul(record_len) > r.remaining() as u64 {
            return Err(Error::Truncated(format!(
                "{count} records of {record_len} bytes declared, {} bytes available",
                r.remaining()
            )));
        }
        let mut records = Vec::with_capacity(count as usize);
        for i in 0..count as usize {
            let id = r.u64("record id")?;
            let mut values = Vec::with_capacity(dimension);
            for j in 0..dimension {
                let v = r.f64("record value")?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        record: i,
                        component: j,
                    });
                }
                values.push(v);
            }
            records.push(Record {
                id,
                vector: LatentVector(values),
            });
        }
        let manifest_len = r.u32("manifest length")? as usize;
        let manifest: Manifest = serde_json::from_slice(r.take(manifest_len, "manifest")?)?;
        if r.remaining() != 0 {
            return Err(Error::invalid(format!(
                "{} trailing bytes after manifest",
                r.remaining()
            )));
        }
        LatentStore::from_records(dimension, records, manifest)
    }
}

pub fn write_store(path: impl AsRef<Path>, store: &LatentStore) -> Result<()> {
    write_atomic(path.as_ref(), &store.to_bytes()?)
}

pub fn read_store(path: impl AsRef<Path>) -> Result<LatentStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LatentStore::from_bytes(&bytes)
}

/// Whole-file replacement: write a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Little-endian cursor that reports truncation with the field being read.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(format!(
                "{what} at byte {}: need {n}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N, what)?);
        Ok(a)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> LatentVector {
        LatentVector::new(x.to_vec()).unwrap()
    }

    fn small_store() -> LatentStore {
        LatentStore::from_records(
            2,
            vec![Record {
                id: 0,
                vector: v(&[1.0, 0.0]),
            }],
            Manifest::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_record_layout() {
        let store = small_store();
        let bytes = store.to_bytes().unwrap();
        let manifest = serde_json::to_vec(&Manifest::default()).unwrap();
        // header 20 + id 8 + 2 × f64 + manifest length + manifest
        assert_eq!(bytes.len(), 20 + 8 + 16 + 4 + manifest.len());
        assert_eq!(&bytes[..4], b"GNLZ");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[28..36], &1.0f64.to_le_bytes());
        assert_eq!(LatentStore::from_bytes(&bytes).unwrap(), store);
    }

    #[test]
    fn empty_store_is_valid() {
        let store = LatentStore::new(512, Manifest::default()).unwrap();
        let back = LatentStore::from_bytes(&store.to_bytes().unwrap()).unwrap();
        assert_eq!(back.dimension(), 512);
        assert!(back.is_empty());
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = small_store().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            LatentStore::from_bytes(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = small_store().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            LatentStore::from_bytes(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn truncated_mid_record() {
        let bytes = small_store().to_bytes().unwrap();
        assert!(matches!(
            LatentStore::from_bytes(&bytes[..32]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn non_finite_rejected_on_read() {
        let mut bytes = small_store().to_bytes().unwrap();
        bytes[28..36].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            LatentStore::from_bytes(&bytes),
            Err(Error::NonFinite {
                record: 0,
                component: 0
            })
        ));
    }

    #[test]
    fn oversized_header_does_not_allocate() {
        let mut bytes = small_store().to_bytes().unwrap();
        bytes[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            LatentStore::from_bytes(&bytes),
            Err(Error::Truncated(_))
        ));
        bytes[8..12].copy_from_slice(&70_000u32.to_le_bytes());
        assert!(matches!(
            LatentStore::from_bytes(&bytes),
            Err(Error::InvalidDimension(70_000))
        ));
    }

    #[test]
    fn store_invariants_enforced() {
        let mut s = LatentStore::new(2, Manifest::default()).unwrap();
        s.push(3, v(&[0.0, 0.0])).unwrap();
        assert!(matches!(
            s.push(3, v(&[0.0, 1.0])),
            Err(Error::IdOrder { .. })
        ));
        assert!(matches!(
            s.push(4, v(&[0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LatentVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(s.get(3).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(s.get(4).is_none());
    }
}
