//! Pre-training bias measured directly on image/text embeddings: KL-divergence
//! of per-demographic recall@k, and MaxSkew@k for neutral text prompts.
//!
//! Similarity is cosine on the raw embeddings. Ranking ties are broken by
//! ascending sample id so every result is deterministic.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{norm, DemographicPartition, EmbeddingSet, Pairs, ProtectedAttribute};
use crate::divergence::kl_from_uniform;
use crate::error::{Error, Result};
use crate::value::MetricValue;

pub const DEFAULT_RECALL_K: usize = 5;
pub const DEFAULT_SKEW_K: usize = 1000;

/// Images, texts, and which texts correctly describe each image.
#[derive(Debug, Clone)]
pub struct RetrievalCorpus {
    images: EmbeddingSet,
    texts: EmbeddingSet,
    pairs: Pairs,
}

impl RetrievalCorpus {
    pub fn new(images: EmbeddingSet, texts: EmbeddingSet, pairs: Pairs) -> Result<Self> {
        if images.dim() != texts.dim() {
            return Err(Error::Shape(format!(
                "image dim {} differs from text dim {}",
                images.dim(),
                texts.dim()
            )));
        }
        for (image, correct) in &pairs {
            if images.position(image).is_none() {
                return Err(Error::MissingId(image.clone()));
            }
            if let Some(t) = correct.iter().find(|t| texts.position(t).is_none()) {
                return Err(Error::MissingId(t.clone()));
            }
        }
        if let Some(id) = images
            .ids()
            .iter()
            .find(|id| pairs.get(*id).is_none_or(|c| c.is_empty()))
        {
            return Err(Error::invalid(format!("image `{id}` has no correct text")));
        }
        Ok(Self { images, texts, pairs })
    }

    pub fn images(&self) -> &EmbeddingSet {
        &self.images
    }

    pub fn texts(&self) -> &EmbeddingSet {
        &self.texts
    }

    pub fn pairs(&self) -> &Pairs {
        &self.pairs
    }
}

/// Per-demographic recall@k. `recalls[i]` is undefined for an empty bucket.
#[derive(Debug, Clone, Serialize)]
pub struct RecallVector {
    #[serde(serialize_with = "ser_attr_name")]
    pub attribute: ProtectedAttribute,
    pub k: usize,
    pub recalls: Vec<MetricValue>,
    pub hits: Vec<usize>,
    pub counts: Vec<usize>,
}

fn ser_attr_name<S: serde::Serializer>(a: &ProtectedAttribute, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(a.name())
}

fn unit_rows(set: &EmbeddingSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.values().len());
    for (i, row) in set.rows().enumerate() {
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::ZeroVector(set.ids()[i].clone()));
        }
        out.extend(row.iter().map(|&x| x as f64 / n));
    }
    Ok(out)
}

fn unit_vec(v: &[f32], name: &str) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector(name.to_string()));
    }
    Ok(v.iter().map(|&x| x as f64 / n).collect())
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orders (similarity, id) pairs: higher similarity first, then ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Fraction of each demographic's images whose top-`k` texts contain at least
/// one correct text.
pub fn recall_at_k(corpus: &RetrievalCorpus, partition: &DemographicPartition, k: usize) -> Result<RecallVector> {
    let n_texts = corpus.texts.len();
    if k == 0 || k > n_texts {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n_texts}")));
    }
    let text_units = unit_rows(&corpus.texts)?;
    let dim = corpus.texts.dim();
    let text_ids = corpus.texts.ids();

    let labeled = partition.labeled_ids();
    for (id, _) in &labeled {
        if corpus.images.position(id).is_none() {
            return Err(Error::MissingId(id.to_string()));
        }
    }

    let outcomes: Vec<Result<(usize, bool)>> = labeled
        .par_iter()
        .map(|&(id, demo)| {
            let row = corpus.images.row_by_id(id).expect("checked above");
            let q = unit_vec(row, id)?;
            let sims: Vec<f64> = text_units.chunks_exact(dim).map(|t| dot64(&q, t)).collect();
            let correct = &corpus.pairs[id];
            // Best-ranked correct text under the tie-break.
            let best = correct
                .iter()
                .map(|t| {
                    let j = corpus.texts.position(t).expect("validated");
                    (sims[j], text_ids[j].as_str())
                })
                .min_by(|a, b| rank_order(*a, *b))
                .expect("non-empty");
            let rank = sims
                .iter()
                .zip(text_ids)
                .filter(|(s, tid)| rank_order((**s, tid.as_str()), best) == Ordering::Less)
                .count();
            Ok((demo, rank < k))
        })
        .collect();

    let mut hits = vec![0usize; partition.attribute().len()];
    for o in outcomes {
        let (demo, hit) = o?;
        if hit {
            hits[demo] += 1;
        }
    }
    let counts = partition.counts();
    let recalls = hits
        .iter()
        .zip(&counts)
        .zip(partition.attribute().demographics())
        .map(|((&h, &c), name)| {
            if c == 0 {
                MetricValue::undefined(format!("no images for demographic `{name}`"))
            } else {
                MetricValue::Defined(h as f64 / c as f64)
            }
        })
        .collect();
    Ok(RecallVector {
        attribute: partition.attribute().clone(),
        k,
        recalls,
        hits,
        counts,
    })
}

/// KL-divergence of the L1-normalized recall vector from uniform, in nats.
pub fn kl_of_recall(recalls: &RecallVector) -> MetricValue {
    if let Some((i, v)) = recalls.recalls.iter().enumerate().find(|(_, v)| !v.is_defined()) {
        return MetricValue::undefined(format!(
            "recall for `{}` undefined: {}",
            recalls.attribute.demographics()[i],
            v.reason().unwrap_or("")
        ));
    }
    let values: Vec<Option<f64>> = recalls.recalls.iter().map(MetricValue::value).collect();
    kl_from_uniform(&values)
}

#[derive(Debug, Clone, Serialize)]
pub struct SkewResult {
    pub prompt: String,
    pub k: usize,
    /// Share of the top-k retrieved images per demographic.
    pub observed: Vec<f64>,
    /// Share of the whole corpus per demographic.
    pub ideal: Vec<f64>,
    pub max_skew: MetricValue,
}

/// MaxSkew@k of one prompt over the images bucketed in `partition`.
pub fn max_skew_at_k(
    images: &EmbeddingSet,
    prompt: &[f32],
    prompt_id: &str,
    partition: &DemographicPartition,
    k: usize,
) -> Result<SkewResult> {
    let labeled = partition.labeled_ids();
    let n = labeled.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n} annotated images")));
    }
    let counts = partition.counts();
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::AbsentDemographic(partition.attribute().demographics()[i].clone()));
    }
    if prompt.len() != images.dim() {
        return Err(Error::Shape(format!(
            "prompt dim {} differs from image dim {}",
            prompt.len(),
            images.dim()
        )));
    }
    let q = unit_vec(prompt, prompt_id)?;
    let mut scored = Vec::with_capacity(n);
    for &(id, demo) in &labeled {
        let row = images.row_by_id(id).ok_or_else(|| Error::MissingId(id.to_string()))?;
        let u = unit_vec(row, id)?;
        scored.push((dot64(&q, &u), id, demo));
    }
    scored.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
    Ok(skew_from_ranking(
        prompt_id,
        k,
        scored.iter().map(|s| s.2),
        &counts,
        n,
    ))
}

fn skew_from_ranking(
    prompt: &str,
    k: usize,
    ranked_demos: impl Iterator<Item = usize>,
    counts: &[usize],
    n: usize,
) -> SkewResult {
    let mut top = vec![0usize; counts.len()];
    for d in ranked_demos.take(k) {
        top[d] += 1;
    }
    let observed: Vec<f64> = top.iter().map(|&c| c as f64 / k as f64).collect();
    let ideal: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    // Demographics absent from the top-k contribute -inf and never win.
    let max_skew = observed
        .iter()
        .zip(&ideal)
        .filter(|(f, _)| **f > 0.0)
        .map(|(f, i)| (f / i).ln())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    SkewResult {
        prompt: prompt.to_string(),
        k,
        observed,
        ideal,
        max_skew: match max_skew {
            Some(v) => MetricValue::Defined(v),
            None => MetricValue::undefined("no demographic present in the top-k"),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanSkew {
    pub mean: MetricValue,
    pub per_prompt: Vec<SkewResult>,
    pub skipped: usize,
}

/// Average MaxSkew@k over every prompt in `prompts` with a defined value.
pub fn mean_max_skew(
    images: &EmbeddingSet,
    prompts: &EmbeddingSet,
    partition: &DemographicPartition,
    k: usize,
) -> Result<MeanSkew> {
    if prompts.is_empty() {
        return Err(Error::invalid("at least one prompt is required"));
    }
    let per_prompt: Vec<SkewResult> = (0..prompts.len())
        .into_par_iter()
        .map(|i| max_skew_at_k(images, prompts.row(i), &prompts.ids()[i], partition, k))
        .collect::<Result<_>>()?;
    let defined: Vec<f64> = per_prompt.iter().filter_map(|s| s.max_skew.value()).collect();
    let skipped = per_prompt.len() - defined.len();
    let mean = if defined.is_empty() {
        MetricValue::undefined("MaxSkew undefined for every prompt")
    } else {
        MetricValue::Defined(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(MeanSkew {
        mean,
        per_prompt,
        skipped,
    })
}
