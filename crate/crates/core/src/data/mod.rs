//! Core records, file ingestion and demographic partitioning.

mod annotations;
mod embedding;
mod manifest;
mod predictions;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use annotations::{
    partition_by_demographic, AnnotationTable, AttributeSchema, DemographicPartition, ProtectedAttribute,
};
pub use embedding::{EmbeddingSet, DTYPE, FORMAT_VERSION, MAGIC};
pub use manifest::{Manifest, ModelFiles};
pub use predictions::{CaptionEntry, CaptionOrigin, PredictionSet, ScoredEntry, Task, VqaEntry};

use crate::error::{Error, Result};

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    EmbeddingSet::load(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct PairLine {
    image: String,
    texts: Vec<String>,
}

/// Image id to the ids of its correct texts.
pub type Pairs = BTreeMap<String, BTreeSet<String>>;

/// Reads the image-text pair file: JSON lines `{"image": id, "texts": [ids]}`.
/// Repeated image ids accumulate.
pub fn parse_pairs(text: &str, file: &str) -> Result<Pairs> {
    let mut pairs = Pairs::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PairLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        pairs.entry(p.image).or_default().extend(p.texts);
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Pairs> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, &path.display().to_string())
}

pub fn pairs_to_jsonl(pairs: &Pairs) -> String {
    let mut out = String::new();
    for (image, texts) in pairs {
        let line = PairLine {
            image: image.clone(),
            texts: texts.iter().cloned().collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("pair serializes"));
        out.push('\n');
    }
    out
}

/// Reads a JSON list of sample ids (used for fixed id orderings).
pub fn load_id_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarity accumulated in f64. `None` if either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}
