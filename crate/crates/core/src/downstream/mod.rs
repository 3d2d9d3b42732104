//! Downstream bias over task predictions: disparity of per-demographic task
//! scores, directional bias amplification for VQA, and caption leakage.

mod dba;
mod lic;

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

pub use dba::{dba, dba_terms, filter_answers, DbaCell, DbaInputs, DbaResult, DbaSample, FilterSummary, DEFAULT_TOP_N};
pub use lic::{
    labeled_captions, lic, lic_with, tokenize, HashedLogisticTrainer, LabeledCaption, LeakageClassifier,
    LeakageConfig, LeakageModel, LeakageTrainer, LicResult, DEFAULT_MASK_WORDS,
};

use crate::data::{DemographicPartition, ScoredEntry, VqaEntry};
use crate::divergence::kl_from_uniform;
use crate::error::Error;
use crate::value::MetricValue;

/// Mean task score per demographic.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreTable {
    pub metric: String,
    pub scores: Vec<MetricValue>,
    pub counts: Vec<usize>,
}

impl ScoreTable {
    /// Averages per-sample scores within each bucket. Samples outside the
    /// partition are ignored; an empty bucket yields an undefined score.
    pub fn from_samples<'a, I>(metric: &str, partition: &DemographicPartition, samples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let n = partition.attribute().len();
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        // Accumulate in id order so the floating-point sum is reproducible.
        let mut ordered: Vec<(&str, f64)> = samples.into_iter().collect();
        ordered.sort_by(|a, b| a.0.cmp(b.0));
        for (id, score) in ordered {
            if let Some(d) = partition.demographic_of(id) {
                sums[d] += score;
                counts[d] += 1;
            }
        }
        let scores = sums
            .iter()
            .zip(&counts)
            .zip(partition.attribute().demographics())
            .map(|((&s, &c), name)| {
                if c == 0 {
                    MetricValue::undefined(format!("no samples for demographic `{name}`"))
                } else {
                    MetricValue::from_f64(s / c as f64, "non-finite mean score")
                }
            })
            .collect();
        Self {
            metric: metric.to_string(),
            scores,
            counts,
        }
    }

    pub fn from_scored(metric: &str, partition: &DemographicPartition, entries: &[ScoredEntry]) -> Self {
        Self::from_samples(
            metric,
            partition,
            entries
                .iter()
                .filter(|e| e.metric == metric)
                .map(|e| (e.id.as_str(), e.value)),
        )
    }
}

/// KL-divergence of the L1-normalized score vector from uniform, in nats.
pub fn kl_disparity(scores: &ScoreTable) -> MetricValue {
    let values: Vec<Option<f64>> = scores.scores.iter().map(MetricValue::value).collect();
    match kl_from_uniform(&values) {
        MetricValue::Undefined(r) => MetricValue::Undefined(format!("{}: {r}", scores.metric)),
        v => v,
    }
}

/// How a VQA prediction is scored against the annotator answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VqaAccuracy {
    /// 1 if the prediction matches any annotator answer.
    Exact,
    /// min(#matching annotator answers / 3, 1).
    #[default]
    Soft,
}

impl FromStr for VqaAccuracy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "exact" | "hard" => Ok(VqaAccuracy::Exact),
            "soft" => Ok(VqaAccuracy::Soft),
            other => Err(Error::invalid(format!("unknown VQA accuracy mode `{other}`"))),
        }
    }
}

/// Lowercases, removes ASCII punctuation and collapses whitespace.
pub fn normalize_answer(answer: &str) -> String {
    answer
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn vqa_accuracy(entry: &VqaEntry, mode: VqaAccuracy) -> f64 {
    let pred = normalize_answer(&entry.pred);
    let matches = entry.gt.iter().filter(|g| normalize_answer(g) == pred).count();
    match mode {
        VqaAccuracy::Exact => {
            if matches > 0 {
                1.0
            } else {
                0.0
            }
        }
        VqaAccuracy::Soft => (matches as f64 / 3.0).min(1.0),
    }
}

/// Per-demographic mean VQA accuracy; each (image, question) entry is one sample.
pub fn vqa_score_table(entries: &[VqaEntry], partition: &DemographicPartition, mode: VqaAccuracy) -> ScoreTable {
    let n = partition.attribute().len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut by_key: BTreeMap<(&str, &str), &VqaEntry> = BTreeMap::new();
    for e in entries {
        by_key.insert((e.id.as_str(), e.qid.as_str()), e);
    }
    for ((id, _), e) in by_key {
        if let Some(d) = partition.demographic_of(id) {
            sums[d] += vqa_accuracy(e, mode);
            counts[d] += 1;
        }
    }
    let scores = sums
        .iter()
        .zip(&counts)
        .zip(partition.attribute().demographics())
        .map(|((&s, &c), name)| {
            if c == 0 {
                MetricValue::undefined(format!("no questions for demographic `{name}`"))
            } else {
                MetricValue::Defined(s / c as f64)
            }
        })
        .collect();
    ScoreTable {
        metric: "vqa-accuracy".into(),
        scores,
        counts,
    }
}
