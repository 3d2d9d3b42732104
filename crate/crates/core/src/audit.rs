//! Runs every applicable metric over a multi-model bundle and collects the
//! results into pre-adaptation and downstream metric tables.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    partition_by_demographic, AnnotationTable, AttributeSchema, DemographicPartition, EmbeddingSet, Manifest,
    ModelFiles, Pairs, PredictionSet, ProtectedAttribute, Task,
};
use crate::downstream::{
    dba, filter_answers, kl_disparity, labeled_captions, lic, vqa_score_table, DbaInputs, LeakageConfig, ScoreTable,
    VqaAccuracy, DEFAULT_TOP_N,
};
use crate::error::{Error, Result};
use crate::retrieval::{kl_of_recall, mean_max_skew, recall_at_k, RetrievalCorpus, DEFAULT_RECALL_K, DEFAULT_SKEW_K};
use crate::transfer::MetricTable;
use crate::value::MetricValue;

pub const RECALL_KL: &str = "recall-kl";
pub const MAXSKEW: &str = "maxskew";
pub const DBA: &str = "dba";
pub const LIC: &str = "lic";
pub const VQA_KL: &str = "vqa-kl";
pub const SCORE_KL_PREFIX: &str = "score-kl:";
pub const RECALL: &str = "recall";
pub const VQA_ACCURACY: &str = "vqa-accuracy";
pub const SCORE_PREFIX: &str = "score:";

pub fn is_pre_metric(name: &str) -> bool {
    name == RECALL_KL || name == MAXSKEW || name == RECALL
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditParams {
    pub recall_k: usize,
    pub skew_k: usize,
    pub top_n: usize,
    #[serde(serialize_with = "ser_display")]
    pub vqa_accuracy: VqaAccuracy,
    pub leakage: LeakageConfig,
    pub seed: u64,
    /// Attributes to audit; all attributes of the schema when empty.
    pub attributes: Vec<String>,
}

fn ser_display<S: serde::Serializer>(v: &VqaAccuracy, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match v {
        VqaAccuracy::Exact => "exact",
        VqaAccuracy::Soft => "soft",
    })
}

impl Default for AuditParams {
    fn default() -> Self {
        Self {
            recall_k: DEFAULT_RECALL_K,
            skew_k: DEFAULT_SKEW_K,
            top_n: DEFAULT_TOP_N,
            vqa_accuracy: VqaAccuracy::default(),
            leakage: LeakageConfig::default(),
            seed: 0,
            attributes: Vec::new(),
        }
    }
}

/// Scalar and per-demographic results of one model, keyed by metric then
/// attribute, plus free-form details for the report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ModelAudit {
    pub model: String,
    pub metrics: BTreeMap<String, BTreeMap<String, MetricValue>>,
    pub per_demographic: BTreeMap<String, BTreeMap<String, Vec<MetricValue>>>,
    pub details: BTreeMap<String, BTreeMap<String, serde_json::Value>>,
}

impl ModelAudit {
    fn put(&mut self, metric: &str, attr: &str, v: MetricValue) {
        self.metrics.entry(metric.into()).or_default().insert(attr.into(), v);
    }

    fn put_demo(&mut self, metric: &str, attr: &str, v: Vec<MetricValue>) {
        self.per_demographic.entry(metric.into()).or_default().insert(attr.into(), v);
    }

    fn detail<T: Serialize>(&mut self, metric: &str, attr: &str, v: &T) -> Result<()> {
        self.details.entry(metric.into()).or_default().insert(attr.into(), serde_json::to_value(v)?);
        Ok(())
    }

    /// Records a metric that could not be computed for a data reason.
    fn undefined(&mut self, metric: &str, attr: &str, e: &Error) {
        self.put(metric, attr, MetricValue::undefined(e.to_string()));
    }
}

/// Errors that make one metric undefined rather than failing the run.
pub fn is_data_gap(e: &Error) -> bool {
    matches!(
        e,
        Error::AbsentDemographic(_) | Error::EmptyVocabulary | Error::InvalidArgument(_) | Error::ZeroVector(_)
    )
}

pub struct BundleInputs {
    pub annotations: AnnotationTable,
    pub pairs: Option<Pairs>,
}

impl BundleInputs {
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let schema = AttributeSchema::load(&manifest.schema)?;
        let annotations = AnnotationTable::load(schema, &manifest.annotations)?;
        let pairs = manifest.pairs.as_ref().map(crate::data::load_pairs).transpose()?;
        Ok(Self { annotations, pairs })
    }
}

fn partition(inputs: &BundleInputs, attr: &ProtectedAttribute, ids: &[String]) -> Result<DemographicPartition> {
    partition_by_demographic(&inputs.annotations, attr, ids.iter().map(String::as_str))
}

fn unique_ids<'a>(ids: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    ids.into_iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Audits one model for each attribute in `attributes`.
pub fn audit_model(
    files: &ModelFiles,
    inputs: &BundleInputs,
    attributes: &[ProtectedAttribute],
    params: &AuditParams,
) -> Result<ModelAudit> {
    let mut out = ModelAudit {
        model: files.id.clone(),
        ..Default::default()
    };

    if let (Some(img), Some(txt)) = (&files.retrieval_images, &files.retrieval_texts) {
        let pairs = inputs
            .pairs
            .clone()
            .ok_or_else(|| Error::invalid("retrieval files given without a pairs file"))?;
        let corpus = RetrievalCorpus::new(EmbeddingSet::load(img)?, EmbeddingSet::load(txt)?, pairs)?;
        for attr in attributes {
            let part = partition(inputs, attr, corpus.images().ids())?;
            match recall_at_k(&corpus, &part, params.recall_k) {
                Ok(r) => {
                    out.put(RECALL_KL, attr.name(), kl_of_recall(&r));
                    out.put_demo(RECALL, attr.name(), r.recalls.clone());
                    out.detail(RECALL, attr.name(), &r)?;
                }
                Err(e) if is_data_gap(&e) => out.undefined(RECALL_KL, attr.name(), &e),
                Err(e) => return Err(e),
            }
        }
    }

    if let (Some(img), Some(prompts)) = (&files.skew_images, &files.skew_prompts) {
        let images = EmbeddingSet::load(img)?;
        let prompts = EmbeddingSet::load(prompts)?;
        for attr in attributes {
            let part = partition(inputs, attr, images.ids())?;
            match mean_max_skew(&images, &prompts, &part, params.skew_k) {
                Ok(s) => {
                    out.put(MAXSKEW, attr.name(), s.mean.clone());
                    out.detail(MAXSKEW, attr.name(), &s)?;
                }
                Err(e) if is_data_gap(&e) => out.undefined(MAXSKEW, attr.name(), &e),
                Err(e) => return Err(e),
            }
        }
    }

    if let Some(path) = &files.vqa {
        let PredictionSet::Vqa(entries) = PredictionSet::load(Task::Vqa, path)? else {
            unreachable!("loaded as VQA")
        };
        let ids = unique_ids(entries.iter().map(|e| &e.id));
        for attr in attributes {
            let part = partition(inputs, attr, &ids)?;
            let table = vqa_score_table(&entries, &part, params.vqa_accuracy);
            out.put(VQA_KL, attr.name(), kl_disparity(&table));
            out.put_demo(VQA_ACCURACY, attr.name(), table.scores.clone());
            out.detail(VQA_KL, attr.name(), &table)?;
            let result = DbaInputs::from_vqa(&entries, &part).and_then(|raw| {
                let (kept, summary) = filter_answers(&raw, params.top_n);
                Ok((dba(&kept)?, summary))
            });
            match result {
                Ok((r, summary)) => {
                    out.put(DBA, attr.name(), MetricValue::from_f64(r.value, "non-finite amplification"));
                    out.detail(DBA, attr.name(), &serde_json::json!({"result": r, "filter": summary}))?;
                }
                Err(e) if is_data_gap(&e) => out.undefined(DBA, attr.name(), &e),
                Err(e) => return Err(e),
            }
        }
    }

    if let Some(path) = &files.captions {
        let PredictionSet::Captioning(mut entries) = PredictionSet::load(Task::Captioning, path)? else {
            unreachable!("loaded as captions")
        };
        if let Some(gt) = &files.captions_gt {
            let PredictionSet::Captioning(more) = PredictionSet::load(Task::Captioning, gt)? else {
                unreachable!("loaded as captions")
            };
            entries.extend(more);
        }
        let ids = unique_ids(entries.iter().map(|e| &e.id));
        for attr in attributes {
            let part = partition(inputs, attr, &ids)?;
            let (gt, pred) = labeled_captions(&entries, &part);
            match lic(&gt, &pred, attr.len(), params.seed, &params.leakage) {
                Ok(r) => {
                    out.put(LIC, attr.name(), MetricValue::Defined(r.lic));
                    out.detail(LIC, attr.name(), &r)?;
                }
                Err(e) if is_data_gap(&e) => out.undefined(LIC, attr.name(), &e),
                Err(e) => return Err(e),
            }
        }
    }

    if let Some(path) = &files.scores {
        let PredictionSet::Scored(entries) = PredictionSet::load(Task::Scored, path)? else {
            unreachable!("loaded as scores")
        };
        let metrics: BTreeSet<&str> = entries.iter().map(|e| e.metric.as_str()).collect();
        let ids = unique_ids(entries.iter().map(|e| &e.id));
        for attr in attributes {
            let part = partition(inputs, attr, &ids)?;
            for metric in &metrics {
                let subset: Vec<_> = entries.iter().filter(|e| e.metric == *metric).cloned().collect();
                let table = ScoreTable::from_scored(metric, &part, &subset);
                out.put(&format!("{SCORE_KL_PREFIX}{metric}"), attr.name(), kl_disparity(&table));
                out.put_demo(&format!("{SCORE_PREFIX}{metric}"), attr.name(), table.scores.clone());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleAudit {
    pub models: Vec<ModelAudit>,
    pub pre: MetricTable,
    pub down: MetricTable,
}

/// Audits every model of the manifest (in parallel, results in manifest
/// order) and splits the values into pre-adaptation and downstream tables.
pub fn audit_bundle(manifest: &Manifest, params: &AuditParams) -> Result<BundleAudit> {
    let inputs = BundleInputs::load(manifest)?;
    let schema = inputs.annotations.schema();
    let attributes: Vec<ProtectedAttribute> = if params.attributes.is_empty() {
        schema.attributes.clone()
    } else {
        params
            .attributes
            .iter()
            .map(|a| schema.get(a).cloned())
            .collect::<Result<_>>()?
    };
    let models: Vec<ModelAudit> = manifest
        .models
        .par_iter()
        .map(|m| audit_model(m, &inputs, &attributes, params))
        .collect::<Result<_>>()?;
    let (pre, down) = tables(&models, &attributes);
    Ok(BundleAudit { models, pre, down })
}

pub fn tables(models: &[ModelAudit], attributes: &[ProtectedAttribute]) -> (MetricTable, MetricTable) {
    let mut pre = MetricTable::default();
    let mut down = MetricTable::default();
    for m in models {
        for (metric, attrs) in &m.metrics {
            let t = if is_pre_metric(metric) { &mut pre } else { &mut down };
            for (attr, v) in attrs {
                t.insert(metric, attr, &m.model, v);
            }
        }
        for (metric, attrs) in &m.per_demographic {
            let t = if is_pre_metric(metric) { &mut pre } else { &mut down };
            for (attr, v) in attrs {
                let demos = attributes
                    .iter()
                    .find(|a| a.name() == attr)
                    .map(|a| a.demographics().to_vec())
                    .unwrap_or_default();
                t.insert_demographics(metric, attr, &demos, &m.model, v);
            }
        }
    }
    (pre, down)
}
