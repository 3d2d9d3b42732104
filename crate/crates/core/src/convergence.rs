//! Similarity of similarities: each model's space is summarised by the
//! cosine similarities of all sample pairs, and models are compared by the
//! cosine between those profiles, before and after adaptation.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{norm, EmbeddingSet};
use crate::error::{Error, Result};
use crate::value::MetricValue;

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pre,
    Post,
}

/// Pairwise cosine similarities in (i, j), i < j order over a fixed id list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityProfile {
    pub model_id: String,
    pub samples: usize,
    pub values: Vec<f64>,
}

pub fn similarity_profile(emb: &EmbeddingSet, id_order: &[String]) -> Result<SimilarityProfile> {
    if id_order.len() < 2 {
        return Err(Error::invalid("a similarity profile needs at least 2 samples"));
    }
    let mut unit = Vec::with_capacity(id_order.len());
    for id in id_order {
        let row = emb
            .row_by_id(id)
            .ok_or_else(|| Error::MissingId(format!("`{id}` not in `{}`", emb.model_id())))?;
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::ZeroVector(format!("`{id}` in `{}`", emb.model_id())));
        }
        unit.push(row.iter().map(|&v| v as f64 / n).collect::<Vec<f64>>());
    }
    let d = unit.len();
    let values = (0..d)
        .into_par_iter()
        .flat_map_iter(|i| {
            let unit = &unit;
            (i + 1..d).map(move |j| dot(&unit[i], &unit[j]).clamp(-1.0, 1.0))
        })
        .collect();
    Ok(SimilarityProfile {
        model_id: emb.model_id().to_string(),
        samples: d,
        values,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Uniform bins over `[lo, hi]`; the last bin is closed.
    pub fn uniform(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| if b == bins { hi } else { lo + width * b as f64 }).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
            counts[b.clamp(0, bins as isize - 1) as usize] += 1;
        }
        Self { edges, counts }
    }
}

/// Cosine matrix between model profiles and statistics over its
/// off-diagonal entries (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStats {
    pub models: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl ConvergenceStats {
    /// Statistics of a symmetric similarity matrix; needs at least 2 models.
    pub fn from_matrix(models: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let e = matrix.len();
        if e < 2 || models.len() != e || matrix.iter().any(|r| r.len() != e) {
            return Err(Error::Shape(format!("need a square matrix over at least 2 models, got {e}")));
        }
        let off: Vec<f64> = (0..e).flat_map(|i| (i + 1..e).map(move |j| (i, j))).map(|(i, j)| matrix[i][j]).collect();
        let mean = off.iter().sum::<f64>() / off.len() as f64;
        let std = (off.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / off.len() as f64).sqrt();
        let min = off.iter().copied().fold(f64::INFINITY, f64::min);
        let max = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let histogram = Histogram::uniform(&off, min, 1.0f64.max(max), HISTOGRAM_BINS);
        Ok(Self {
            models,
            matrix,
            mean,
            std,
            min,
            max,
            histogram,
        })
    }

    /// Upper-triangle entries in (i, j), i < j order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let e = self.matrix.len();
        (0..e).flat_map(|i| (i + 1..e).map(move |j| (i, j))).map(|(i, j)| self.matrix[i][j]).collect()
    }
}

pub fn inter_model_similarity(profiles: &[SimilarityProfile]) -> Result<ConvergenceStats> {
    if profiles.len() < 2 {
        return Err(Error::invalid("need at least 2 profiles"));
    }
    let len = profiles[0].values.len();
    if let Some(p) = profiles.iter().find(|p| p.values.len() != len) {
        return Err(Error::Shape(format!(
            "profile `{}` has {} entries, expected {len}",
            p.model_id,
            p.values.len()
        )));
    }
    let norms: Vec<f64> = profiles.iter().map(|p| dot(&p.values, &p.values).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroVector(format!("profile `{}`", profiles[i].model_id)));
    }
    let e = profiles.len();
    let mut matrix = vec![vec![1.0; e]; e];
    let upper: Vec<(usize, usize, f64)> = (0..e)
        .flat_map(|i| (i + 1..e).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            let c = dot(&profiles[i].values, &profiles[j].values) / (norms[i] * norms[j]);
            (i, j, c.clamp(-1.0, 1.0))
        })
        .collect();
    for (i, j, c) in upper {
        matrix[i][j] = c;
        matrix[j][i] = c;
    }
    ConvergenceStats::from_matrix(profiles.iter().map(|p| p.model_id.clone()).collect(), matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub mean_pre: f64,
    pub std_pre: f64,
    pub mean_post: f64,
    pub std_post: f64,
    pub min_post: f64,
    /// How many pre-adaptation standard deviations the least similar
    /// post-adaptation pair sits above the pre-adaptation mean.
    pub z_min_post: MetricValue,
    pub variance_ratio: MetricValue,
}

pub fn convergence_report(pre: &ConvergenceStats, post: &ConvergenceStats) -> ConvergenceReport {
    let z = if pre.std > 0.0 {
        MetricValue::Defined((post.min - pre.mean) / pre.std)
    } else {
        MetricValue::undefined("pre-adaptation standard deviation is zero")
    };
    let ratio = if post.std > 0.0 {
        MetricValue::Defined(pre.std / post.std)
    } else {
        MetricValue::undefined("post-adaptation standard deviation is zero")
    };
    ConvergenceReport {
        mean_pre: pre.mean,
        std_pre: pre.std,
        mean_post: post.mean,
        std_post: post.std,
        min_post: post.min,
        z_min_post: z,
        variance_ratio: ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    #[test]
    fn orthonormal_rows_give_zero_profile() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]];
        let emb = EmbeddingSet::from_rows("m", ids(3), &rows).unwrap();
        let p = similarity_profile(&emb, &ids(3)).unwrap();
        assert_eq!(p.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicated_row_has_unit_similarity() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![-3.0, 1.0]];
        let emb = EmbeddingSet::from_rows("m", ids(3), &rows).unwrap();
        let p = similarity_profile(&emb, &ids(3)).unwrap();
        assert!((p.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_and_missing_id_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        let emb = EmbeddingSet::from_rows("m", ids(2), &rows).unwrap();
        assert!(matches!(similarity_profile(&emb, &ids(2)), Err(Error::ZeroVector(_))));
        let order = vec!["i0".to_string(), "i7".to_string()];
        assert!(matches!(similarity_profile(&emb, &order), Err(Error::MissingId(_))));
    }

    fn profile(model: &str, values: Vec<f64>) -> SimilarityProfile {
        SimilarityProfile {
            model_id: model.into(),
            samples: 0,
            values,
        }
    }

    #[test]
    fn identical_profiles() {
        let ps = vec![profile("a", vec![0.1, 0.5, 0.3]), profile("b", vec![0.1, 0.5, 0.3]), profile("c", vec![0.2, 1.0, 0.6])];
        let s = inter_model_similarity(&ps).unwrap();
        assert!(s.off_diagonal().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.std < 1e-12);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn two_models_single_value() {
        let ps = vec![profile("a", vec![1.0, 0.0]), profile("b", vec![1.0, 1.0])];
        let s = inter_model_similarity(&ps).unwrap();
        assert!((s.mean - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.min, s.mean);
    }

    #[test]
    fn length_mismatch() {
        let ps = vec![profile("a", vec![1.0, 0.0]), profile("b", vec![1.0])];
        assert!(matches!(inter_model_similarity(&ps), Err(Error::Shape(_))));
    }

    #[test]
    fn histogram_covers_min_to_one() {
        let h = Histogram::uniform(&[0.5, 0.75, 1.0], 0.5, 1.0, 50);
        assert_eq!(h.edges.len(), 51);
        assert_eq!(h.edges[0], 0.5);
        assert_eq!(h.edges[50], 1.0);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[25], 1);
        assert_eq!(h.counts[49], 1);
    }

    #[test]
    fn self_comparison_is_not_positive() {
        let m = vec![vec![1.0, 0.9, 0.8], vec![0.9, 1.0, 0.95], vec![0.8, 0.95, 1.0]];
        let s = ConvergenceStats::from_matrix(vec!["a".into(), "b".into(), "c".into()], m).unwrap();
        let r = convergence_report(&s, &s);
        assert!(r.z_min_post.value().unwrap() <= 0.0);
    }

    #[test]
    fn zero_spread_is_undefined() {
        let m = vec![vec![1.0, 0.9], vec![0.9, 1.0]];
        let s = ConvergenceStats::from_matrix(vec!["a".into(), "b".into()], m).unwrap();
        let r = convergence_report(&s, &s);
        assert!(!r.z_min_post.is_defined());
        assert!(!r.variance_ratio.is_defined());
    }
}
