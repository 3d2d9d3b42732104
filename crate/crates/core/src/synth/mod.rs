//! Seeded synthetic bundles with planted, known bias.
//!
//! A bundle holds embedding spaces with shared concept clusters, a
//! demographic annotation, retrieval and MaxSkew corpora, VQA answers,
//! captions and scores for every model. Each bias channel is driven by a
//! per-model level in `(0, 1]`, and the metric values the levels imply are
//! written to `expected.json` next to the data.

mod spaces;
mod tasks;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    pairs_to_jsonl, AnnotationTable, AttributeSchema, CaptionEntry, EmbeddingSet, Manifest, ModelFiles, Pairs,
    PredictionSet, ProtectedAttribute, ScoredEntry, VqaEntry,
};
use crate::error::{Error, Result};
use crate::rng;

pub use spaces::{gen_spaces, random_rotation, Spaces};
pub use tasks::{gen_predictions, ModelTasks, Predictions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptSpec {
    /// Planted concepts shared by every model.
    pub count: usize,
    /// Norm of each concept center.
    pub separation: f64,
    /// Per-sample spread around its center, shared across models.
    pub noise: f64,
    /// Samples in one extra cluster that is not a planted concept.
    pub background: usize,
}

impl Default for ConceptSpec {
    fn default() -> Self {
        Self {
            count: 5,
            separation: 1.0,
            noise: 0.1,
            background: 90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionLeak {
    /// Rate at which ground-truth captions carry a demographic token.
    pub gt: f64,
    /// Rate for generated captions at the top level; scaled by the model level.
    pub pred: f64,
}

impl Default for CaptionLeak {
    fn default() -> Self {
        Self { gt: 0.0, pred: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub samples: usize,
    pub dim: usize,
    pub models: usize,
    pub concepts: ConceptSpec,
    /// Per-model displacement of concept centers.
    pub model_jitter: f64,
    /// Per-model, per-sample noise.
    pub model_noise: f64,
    /// Fresh noise added to post-adaptation rows.
    pub post_noise: f64,
    pub attribute: String,
    pub demographics: Vec<String>,
    pub proportions: Vec<f64>,
    /// Retrieval miss rate of every demographic but the last.
    pub base_miss: f64,
    /// Extra miss rate of the last demographic at level 1.
    pub recall_gap: f64,
    pub recall_k: usize,
    pub skew_prompts: usize,
    pub skew_k: usize,
    /// Over-representation of the first demographic in top-k sets at level 1,
    /// as a fraction of the room above its corpus share.
    pub skew_strength: f64,
    /// Fraction of eligible answers switched to the stereotyped one at level 1.
    pub amplification: f64,
    /// Yes/no error rate of the last demographic at level 1.
    pub accuracy_gap: f64,
    /// Drop of the last demographic's mean score at level 1.
    pub score_gap: f64,
    pub caption_leak: CaptionLeak,
    /// Weight of the shared target space in the post-adaptation spaces.
    pub convergence: f64,
    /// Drive recall disparity and amplification from the same model levels.
    pub planted_monotone: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 690,
            dim: 32,
            models: 5,
            concepts: ConceptSpec::default(),
            model_jitter: 0.1,
            model_noise: 0.05,
            post_noise: 0.01,
            attribute: "gender".into(),
            demographics: vec!["female".into(), "male".into()],
            proportions: vec![0.5, 0.5],
            base_miss: 0.1,
            recall_gap: 0.3,
            recall_k: 5,
            skew_prompts: 10,
            skew_k: 100,
            skew_strength: 0.5,
            amplification: 0.5,
            accuracy_gap: 0.3,
            score_gap: 0.2,
            caption_leak: CaptionLeak::default(),
            convergence: 0.9,
            planted_monotone: true,
        }
    }
}

/// False for NaN as well as for non-positive values.
fn positive(v: f64) -> bool {
    v > 0.0
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} must lie in [0, 1]")))
    }
}

impl SynthSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models == 0 || self.dim == 0 {
            return Err(Error::invalid("models and dim must be positive"));
        }
        if self.concepts.count == 0 || self.samples < self.concepts.count + self.concepts.background {
            return Err(Error::invalid("every planted concept needs at least one sample"));
        }
        if !positive(self.concepts.separation) || self.concepts.noise < 0.0 {
            return Err(Error::invalid("separation must be positive and noise non-negative"));
        }
        if self.model_jitter < 0.0 || self.model_noise < 0.0 || self.post_noise < 0.0 {
            return Err(Error::invalid("model jitter and noise must be non-negative"));
        }
        ProtectedAttribute::new(self.attribute.clone(), self.demographics.clone())?;
        if self.proportions.len() != self.demographics.len() {
            return Err(Error::invalid("one proportion per demographic is required"));
        }
        if self.proportions.iter().any(|&p| !positive(p)) || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("proportions must be positive and sum to 1"));
        }
        for (name, v) in [
            ("base_miss", self.base_miss),
            ("recall_gap", self.recall_gap),
            ("base_miss + recall_gap", self.base_miss + self.recall_gap),
            ("skew_strength", self.skew_strength),
            ("amplification", self.amplification),
            ("accuracy_gap", self.accuracy_gap),
            ("score_gap", self.score_gap),
            ("caption_leak.gt", self.caption_leak.gt),
            ("caption_leak.pred", self.caption_leak.pred),
            ("convergence", self.convergence),
        ] {
            check_rate(name, v)?;
        }
        if self.recall_k == 0 || self.recall_k >= self.samples {
            return Err(Error::invalid("recall_k must lie in 1..samples"));
        }
        if self.skew_prompts == 0 || self.skew_k == 0 || self.skew_k > self.samples {
            return Err(Error::invalid("skew_prompts must be positive and skew_k in 1..=samples"));
        }
        Ok(())
    }

    pub fn attribute(&self) -> ProtectedAttribute {
        ProtectedAttribute::new(self.attribute.clone(), self.demographics.clone()).expect("validated")
    }

    pub fn sample_ids(&self) -> Vec<String> {
        let width = (self.samples.max(2) - 1).to_string().len();
        (0..self.samples).map(|i| format!("img{i:0width$}")).collect()
    }

    pub fn model_ids(&self) -> Vec<String> {
        let width = (self.models.max(2) - 1).to_string().len();
        (0..self.models).map(|m| format!("m{m:0width$}")).collect()
    }
}

/// Per-sample demographic index with exact group sizes: `round(D * p)` for
/// all but the last demographic, which takes the remainder.
pub fn gen_demographics(spec: &SynthSpec) -> Vec<usize> {
    let d = spec.samples;
    let mut labels = Vec::with_capacity(d);
    let last = spec.proportions.len() - 1;
    for (a, p) in spec.proportions[..last].iter().enumerate() {
        let n = ((d as f64 * p).round() as usize).min(d - labels.len());
        labels.extend(std::iter::repeat_n(a, n));
    }
    labels.resize(d, last);
    labels.shuffle(&mut rng::stream(spec.seed, rng::streams::DEMOGRAPHICS));
    labels
}

/// Stream for randomness specific to one model and one channel.
pub(crate) fn model_stream(seed: u64, model: usize, channel: u64) -> rng::Rng {
    rng::stream(seed, rng::streams::PER_MODEL + ((model as u64) << 4) + channel)
}

/// Per-model levels for each bias channel: `(q + 1) / E` for a random
/// permutation `q` of `0..E`, so levels are distinct and evenly spaced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Levels {
    pub recall: Vec<f64>,
    pub skew: Vec<f64>,
    pub amplification: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub leak: Vec<f64>,
    pub score: Vec<f64>,
}

pub fn gen_levels(spec: &SynthSpec) -> Levels {
    let e = spec.models;
    let mut r = rng::stream(spec.seed, rng::streams::LEVELS);
    let mut draw = || {
        let mut q: Vec<usize> = (0..e).collect();
        q.shuffle(&mut r);
        q.into_iter().map(|q| (q + 1) as f64 / e as f64).collect::<Vec<f64>>()
    };
    let recall = draw();
    let skew = draw();
    let independent = draw();
    let accuracy = draw();
    let leak = draw();
    let score = draw();
    let amplification = if spec.planted_monotone { recall.clone() } else { independent };
    Levels {
        recall,
        skew,
        amplification,
        accuracy,
        leak,
        score,
    }
}

/// KL divergence of `values / sum` from the uniform distribution, written
/// out directly so expected values do not depend on the metric code.
pub(crate) fn closed_form_kl(values: &[f64]) -> f64 {
    let total: f64 = values.iter().sum();
    let a = values.len() as f64;
    values
        .iter()
        .map(|&v| v / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * (p * a).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Values implied by the planted levels, per model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedModel {
    pub recall: Vec<f64>,
    #[serde(rename = "recall-kl")]
    pub recall_kl: f64,
    pub maxskew: f64,
    pub dba: f64,
    #[serde(rename = "vqa-accuracy")]
    pub vqa_accuracy: Vec<f64>,
    #[serde(rename = "vqa-kl")]
    pub vqa_kl: f64,
    #[serde(rename = "score-kl")]
    pub score_kl: f64,
    /// Sign of generated minus ground-truth leak rate.
    #[serde(rename = "lic-sign")]
    pub lic_sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expected {
    pub seed: u64,
    pub attribute: String,
    pub demographics: Vec<String>,
    pub recall_k: usize,
    pub skew_k: usize,
    pub score_metric: String,
    /// The (pre-adaptation, downstream) metric pair driven by shared levels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planted: Option<(String, String)>,
    pub levels: Levels,
    /// Absolute tolerance per metric; `lic` is checked by sign only.
    pub tolerances: BTreeMap<String, f64>,
    pub models: BTreeMap<String, ExpectedModel>,
    /// Member ids of each planted concept.
    pub concepts: Vec<Vec<String>>,
}

/// Everything a bundle holds, in memory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub spec: SynthSpec,
    pub schema: AttributeSchema,
    pub annotations: AnnotationTable,
    pub pairs: Pairs,
    pub spaces: Spaces,
    pub predictions: Predictions,
    pub expected: Expected,
}

pub const SCORE_METRIC: &str = "cider";

pub fn generate(spec: &SynthSpec) -> Result<Bundle> {
    spec.validate()?;
    let attribute = spec.attribute();
    let schema = AttributeSchema::new(vec![attribute.clone()])?;
    let ids = spec.sample_ids();
    let demo = gen_demographics(spec);
    let rows = ids
        .iter()
        .zip(&demo)
        .map(|(id, &a)| (id.clone(), BTreeMap::from([(spec.attribute.clone(), spec.demographics[a].clone())])))
        .collect();
    let annotations = AnnotationTable::new(schema.clone(), rows)?;
    let spaces = gen_spaces(spec)?;
    let levels = gen_levels(spec);
    let predictions = gen_predictions(spec, &spaces, &demo, &levels)?;
    let pairs: Pairs = ids
        .iter()
        .map(|id| (id.clone(), [tasks::text_id(id)].into_iter().collect()))
        .collect();

    let mut tolerances = BTreeMap::new();
    for m in ["recall-kl", "maxskew", "dba", "vqa-kl", "score-kl"] {
        tolerances.insert(m.to_string(), 1e-12);
    }
    let concepts = (0..spec.concepts.count)
        .map(|c| {
            ids.iter()
                .zip(&spaces.concept)
                .filter(|(_, &k)| k == Some(c))
                .map(|(id, _)| id.clone())
                .collect()
        })
        .collect();
    let expected = Expected {
        seed: spec.seed,
        attribute: spec.attribute.clone(),
        demographics: spec.demographics.clone(),
        recall_k: spec.recall_k,
        skew_k: spec.skew_k,
        score_metric: SCORE_METRIC.into(),
        planted: spec.planted_monotone.then(|| ("recall-kl".to_string(), "dba".to_string())),
        levels,
        tolerances,
        models: spec
            .model_ids()
            .into_iter()
            .zip(predictions.models.iter().map(|m| m.expected.clone()))
            .collect(),
        concepts,
    };
    Ok(Bundle {
        spec: spec.clone(),
        schema,
        annotations,
        pairs,
        spaces,
        predictions,
        expected,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::to_value(v)?)? + "\n")
}

impl Bundle {
    /// Writes the bundle under `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let models_dir = dir.join("models");
        fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
        write(&dir.join("spec.json"), pretty(&self.spec)?)?;
        write(&dir.join("schema.json"), pretty(&self.schema)?)?;
        write(&dir.join("annotations.jsonl"), self.annotations.to_jsonl())?;
        write(&dir.join("pairs.jsonl"), pairs_to_jsonl(&self.pairs))?;
        write(&dir.join("expected.json"), pretty(&self.expected)?)?;

        let mut files = Vec::new();
        for (m, tasks) in self.predictions.models.iter().enumerate() {
            let id = &tasks.model_id;
            let rel = PathBuf::from("models").join(id);
            let abs = dir.join(&rel);
            fs::create_dir_all(&abs).map_err(|e| Error::io(&abs, e))?;
            let save = |name: &str, set: &EmbeddingSet| -> Result<PathBuf> {
                set.save(abs.join(name))?;
                Ok(rel.join(name))
            };
            let pre = save("pre.emb", &self.spaces.pre[m])?;
            let post = save("post.emb", &self.spaces.post[m])?;
            let texts = save("texts.emb", &tasks.texts)?;
            let skew_images = save("skew_images.emb", &tasks.skew_images)?;
            let prompts = save("prompts.emb", &tasks.prompts)?;
            write(&abs.join("vqa.jsonl"), jsonl::<VqaEntry>(&tasks.vqa))?;
            write(&abs.join("captions.jsonl"), jsonl::<CaptionEntry>(&tasks.captions))?;
            write(&abs.join("scores.jsonl"), jsonl::<ScoredEntry>(&tasks.scores))?;
            for set in [
                PredictionSet::Vqa(tasks.vqa.clone()),
                PredictionSet::Captioning(tasks.captions.clone()),
                PredictionSet::Scored(tasks.scores.clone()),
            ] {
                set.validate()?;
            }
            files.push(ModelFiles {
                id: id.clone(),
                retrieval_images: Some(pre.clone()),
                retrieval_texts: Some(texts),
                skew_images: Some(skew_images),
                skew_prompts: Some(prompts),
                vqa: Some(rel.join("vqa.jsonl")),
                captions: Some(rel.join("captions.jsonl")),
                captions_gt: None,
                scores: Some(rel.join("scores.jsonl")),
                pre_space: Some(pre),
                post_space: Some(post),
            });
        }
        let manifest = Manifest {
            schema: "schema.json".into(),
            annotations: "annotations.jsonl".into(),
            pairs: Some("pairs.jsonl".into()),
            models: files,
            recall_k: Some(self.spec.recall_k),
            skew_k: Some(self.spec.skew_k),
        };
        let path = dir.join("manifest.json");
        write(&path, pretty(&manifest)?)?;
        Ok(path)
    }
}
