//! Embedding matrices and their on-disk container.
//!
//! Layout: 8 magic bytes `BIAUD1\0\0`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then `count * dim` little-endian `f32` values in
//! row-major order. The writer always emits the header compactly with keys in
//! the order `version, dtype, count, dim, model_id, ids`, so loading a file
//! produced by the writer and writing it back reproduces it byte for byte.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BIAUD1\0\0";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    dtype: String,
    count: usize,
    dim: usize,
    model_id: String,
    ids: Vec<String>,
}

/// One model's embeddings, one row per sample.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    model_id: String,
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingSet {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.ids == other.ids
            && self.dim == other.dim
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingSet {
    pub fn new(
        model_id: impl Into<String>,
        ids: Vec<String>,
        dim: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Header("dim must be at least 1".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} rows of dim {}",
                values.len(),
                ids.len(),
                dim
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
                value: values[pos],
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            ids,
            dim,
            values,
            index,
        })
    }

    /// Builds a set from per-row vectors; all rows must share one length.
    pub fn from_rows(model_id: impl Into<String>, ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(1);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows have differing lengths".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(model_id, ids, dim, values)
    }

    /// Rows whose id is in `keep`, in their original order.
    pub fn subset(&self, keep: &std::collections::BTreeSet<String>) -> Result<Self> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&self.ids[i])).collect();
        let ids = rows.iter().map(|&i| self.ids[i].clone()).collect();
        let values = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::new(self.model_id.clone(), ids, self.dim, values)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: FORMAT_VERSION,
            dtype: DTYPE.to_string(),
            count: self.ids.len(),
            dim: self.dim,
            model_id: self.model_id.clone(),
            ids: self.ids.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(Error::Truncated {
                section: "magic",
                expected: MAGIC.len(),
                found: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::BadMagic {
                found: bytes[..8].to_vec(),
            });
        }
        let rest = &bytes[8..];
        if rest.len() < 4 {
            return Err(Error::Truncated {
                section: "header length",
                expected: 4,
                found: rest.len(),
            });
        }
        let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let rest = &rest[4..];
        if rest.len() < header_len {
            return Err(Error::Truncated {
                section: "header",
                expected: header_len,
                found: rest.len(),
            });
        }
        let header: Header = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| Error::Header(e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Header(format!("unsupported version {}", header.version)));
        }
        if header.dtype != DTYPE {
            return Err(Error::Header(format!("unsupported dtype `{}`", header.dtype)));
        }
        if header.dim == 0 {
            return Err(Error::Header("dim must be at least 1".into()));
        }
        if header.count != header.ids.len() {
            return Err(Error::Header(format!(
                "count {} does not match {} ids",
                header.count,
                header.ids.len()
            )));
        }
        let payload = &rest[header_len..];
        let expected = header
            .count
            .checked_mul(header.dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Header("count * dim overflows".into()))?;
        if payload.len() < expected {
            return Err(Error::Truncated {
                section: "payload",
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes {
                extra: payload.len() - expected,
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(header.model_id, header.ids, header.dim, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
