//! Leakage in captioning: how well a caption predicts the demographic of its
//! image, for generated captions relative to ground-truth captions.
//!
//! The default classifier is multinomial logistic regression over hashed
//! unigram and bigram counts (L2-normalized), trained by seeded mini-batch
//! gradient descent. Any other classifier can be plugged in through
//! [`LeakageTrainer`].

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::{CaptionEntry, CaptionOrigin, DemographicPartition};
use crate::error::{Error, Result};
use crate::rng;

/// Words revealing gender or ethnicity, replaced by a mask token before
/// features are extracted.
pub const DEFAULT_MASK_WORDS: &[&str] = &[
    "man", "men", "woman", "women", "boy", "boys", "girl", "girls", "he", "she", "him", "her", "his", "hers",
    "himself", "herself", "male", "female", "males", "females", "gentleman", "gentlemen", "lady", "ladies",
    "guy", "guys", "gal", "mother", "father", "mom", "dad", "son", "sons", "daughter", "daughters", "husband",
    "wife", "brother", "sister", "king", "queen", "prince", "princess", "bride", "groom", "boyfriend",
    "girlfriend", "mr", "mrs", "ms", "sir", "madam", "actor", "actress", "waiter", "waitress", "policeman",
    "policewoman", "businessman", "businesswoman", "grandmother", "grandfather", "uncle", "aunt", "nephew",
    "niece", "asian", "african", "caucasian", "hispanic", "latino", "latina",
];

const MASK_TOKEN: &str = "<mask>";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageConfig {
    /// Feature hash width in bits (2^bits buckets).
    pub hash_bits: u32,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    /// Masking is skipped when empty.
    pub mask_words: Vec<String>,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            hash_bits: 18,
            epochs: 20,
            learning_rate: 0.5,
            l2: 1e-3,
            batch_size: 8,
            mask_words: DEFAULT_MASK_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LeakageConfig {
    pub fn without_masking(mut self) -> Self {
        self.mask_words.clear();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct LabeledCaption {
    pub id: String,
    pub text: String,
    pub demographic: usize,
}

/// Splits captions from a captioning prediction file into ground-truth and
/// generated sets, labeled through `partition`. Unbucketed images are dropped.
pub fn labeled_captions(
    entries: &[CaptionEntry],
    partition: &DemographicPartition,
) -> (Vec<LabeledCaption>, Vec<LabeledCaption>) {
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for e in entries {
        let Some(d) = partition.demographic_of(&e.id) else {
            continue;
        };
        let c = LabeledCaption {
            id: e.id.clone(),
            text: e.caption.clone(),
            demographic: d,
        };
        match e.origin {
            CaptionOrigin::GroundTruth => gt.push(c),
            CaptionOrigin::Generated => pred.push(c),
        }
    }
    (gt, pred)
}

/// Lowercase, split on non-alphanumeric characters, mask listed words.
pub fn tokenize(text: &str, mask: &HashSet<&str>) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if mask.contains(t) {
                MASK_TOKEN.to_string()
            } else {
                t.to_string()
            }
        })
        .collect()
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in *p {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Sparse L2-normalized hashed unigram + bigram counts, sorted by bucket.
fn features(text: &str, mask: &HashSet<&str>, bits: u32) -> Vec<(usize, f64)> {
    let tokens = tokenize(text, mask);
    let width = 1usize << bits;
    let mut idx: Vec<usize> = Vec::with_capacity(tokens.len() * 2);
    for t in &tokens {
        idx.push((fnv1a(&[b"u:", t.as_bytes()]) as usize) & (width - 1));
    }
    for w in tokens.windows(2) {
        idx.push((fnv1a(&[b"b:", w[0].as_bytes(), b" ", w[1].as_bytes()]) as usize) & (width - 1));
    }
    idx.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((j, c)) if *j == i => *c += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    let norm = out.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut out {
            *c /= norm;
        }
    }
    out
}

fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// A trained demographic predictor.
pub trait LeakageModel {
    /// Probability of each demographic for `text`; sums to 1.
    fn predict_proba(&self, text: &str) -> Vec<f64>;
}

pub trait LeakageTrainer {
    type Model: LeakageModel;

    fn train(&self, data: &[LabeledCaption], classes: usize, seed: u64) -> Result<Self::Model>;
}

#[derive(Debug, Clone, Default)]
pub struct HashedLogisticTrainer {
    pub config: LeakageConfig,
}

impl HashedLogisticTrainer {
    pub fn new(config: LeakageConfig) -> Self {
        Self { config }
    }
}

#[derive(Debug, Clone)]
pub struct LeakageClassifier {
    config: LeakageConfig,
    classes: usize,
    /// `classes x 2^hash_bits`, row-major; effective weight is `scale * w`.
    weights: Vec<f64>,
    scale: f64,
    bias: Vec<f64>,
    seed: u64,
}

impl LeakageClassifier {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &LeakageConfig {
        &self.config
    }

    fn mask(&self) -> HashSet<&str> {
        self.config.mask_words.iter().map(String::as_str).collect()
    }

    fn proba_features(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let width = 1usize << self.config.hash_bits;
        let mut logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * width..(c + 1) * width];
                self.bias[c] + self.scale * x.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect();
        softmax(&mut logits);
        logits
    }
}

impl LeakageModel for LeakageClassifier {
    fn predict_proba(&self, text: &str) -> Vec<f64> {
        let x = features(text, &self.mask(), self.config.hash_bits);
        self.proba_features(&x)
    }
}

impl LeakageTrainer for HashedLogisticTrainer {
    type Model = LeakageClassifier;

    fn train(&self, data: &[LabeledCaption], classes: usize, seed: u64) -> Result<LeakageClassifier> {
        let cfg = &self.config;
        if classes < 2 {
            return Err(Error::invalid("leakage classifier needs at least two demographics"));
        }
        let mut per_class = vec![0usize; classes];
        for c in data {
            if c.demographic >= classes {
                return Err(Error::invalid(format!("demographic index {} out of range", c.demographic)));
            }
            per_class[c.demographic] += 1;
        }
        if let Some(d) = per_class.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("demographic #{d} has no captions")));
        }
        if cfg.batch_size == 0 || cfg.hash_bits == 0 || cfg.hash_bits > 26 {
            return Err(Error::invalid("invalid leakage classifier hyperparameters"));
        }

        let mut sorted: Vec<&LabeledCaption> = data.iter().collect();
        sorted.sort();
        let mask: HashSet<&str> = cfg.mask_words.iter().map(String::as_str).collect();
        let xs: Vec<Vec<(usize, f64)>> = sorted.iter().map(|c| features(&c.text, &mask, cfg.hash_bits)).collect();
        let ys: Vec<usize> = sorted.iter().map(|c| c.demographic).collect();

        let width = 1usize << cfg.hash_bits;
        let mut model = LeakageClassifier {
            config: cfg.clone(),
            classes,
            weights: vec![0.0; classes * width],
            scale: 1.0,
            bias: vec![0.0; classes],
            seed,
        };
        let mut rng = rng::stream(seed, rng::streams::LEAKAGE);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let decay = 1.0 - cfg.learning_rate * cfg.l2;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let step = cfg.learning_rate / batch.len() as f64;
                let grads: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|&i| {
                        let mut p = model.proba_features(&xs[i]);
                        p[ys[i]] -= 1.0;
                        p
                    })
                    .collect();
                model.scale *= decay;
                if model.scale < 1e-9 {
                    for w in &mut model.weights {
                        *w *= model.scale;
                    }
                    model.scale = 1.0;
                }
                for (&i, g) in batch.iter().zip(&grads) {
                    for (c, gc) in g.iter().enumerate() {
                        model.bias[c] -= step * gc;
                        let row = &mut model.weights[c * width..(c + 1) * width];
                        for &(j, v) in &xs[i] {
                            row[j] -= step * gc * v / model.scale;
                        }
                    }
                }
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LicResult {
    pub lic_gt: f64,
    pub lic_pred: f64,
    pub lic: f64,
    pub accuracy_gt: f64,
    pub accuracy_pred: f64,
    pub n_gt: usize,
    pub n_pred: usize,
}

fn argmax(p: &[f64]) -> usize {
    // First maximum wins, i.e. ties go to the earlier demographic.
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Mean of `p_a(y) * [argmax p(y) = a]` and plain accuracy over `data`.
fn leakage_score<M: LeakageModel>(model: &M, data: &[LabeledCaption]) -> (f64, f64) {
    let mut sorted: Vec<&LabeledCaption> = data.iter().collect();
    sorted.sort();
    let mut score = 0.0;
    let mut correct = 0usize;
    for c in &sorted {
        let p = model.predict_proba(&c.text);
        if argmax(&p) == c.demographic {
            score += p[c.demographic];
            correct += 1;
        }
    }
    let n = sorted.len().max(1) as f64;
    (score / n, correct as f64 / n)
}

/// Leakage with a caller-supplied classifier.
pub fn lic_with<T: LeakageTrainer>(
    trainer: &T,
    gt: &[LabeledCaption],
    pred: &[LabeledCaption],
    classes: usize,
    seed: u64,
) -> Result<LicResult> {
    let f_gt = trainer.train(gt, classes, seed)?;
    let f_pred = trainer.train(pred, classes, seed)?;
    let (lic_gt, accuracy_gt) = leakage_score(&f_gt, gt);
    let (lic_pred, accuracy_pred) = leakage_score(&f_pred, pred);
    Ok(LicResult {
        lic_gt,
        lic_pred,
        lic: lic_pred - lic_gt,
        accuracy_gt,
        accuracy_pred,
        n_gt: gt.len(),
        n_pred: pred.len(),
    })
}

/// Leakage with the hashed logistic-regression classifier.
pub fn lic(
    gt: &[LabeledCaption],
    pred: &[LabeledCaption],
    classes: usize,
    seed: u64,
    config: &LeakageConfig,
) -> Result<LicResult> {
    lic_with(&HashedLogisticTrainer::new(config.clone()), gt, pred, classes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(i: usize, text: &str, d: usize) -> LabeledCaption {
        LabeledCaption {
            id: format!("c{i:04}"),
            text: text.to_string(),
            demographic: d,
        }
    }

    #[test]
    fn masking_and_tokens() {
        let mask: HashSet<&str> = ["man"].into();
        assert_eq!(tokenize("A Man, riding-a bike!", &mask), vec!["a", "<mask>", "riding", "a", "bike"]);
    }

    #[test]
    fn features_are_unit_norm() {
        let f = features("a dog on a dog", &HashSet::new(), 18);
        let n: f64 = f.iter().map(|(_, v)| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_corpus_is_learned() {
        let data: Vec<_> = (0..100)
            .map(|i| {
                let d = i % 2;
                let word = if d == 0 { "azure" } else { "crimson" };
                cap(i, &format!("a photo of a {word} person walking"), d)
            })
            .collect();
        let model = HashedLogisticTrainer::default().train(&data, 2, 0).unwrap();
        let (_, acc) = leakage_score(&model, &data);
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn identical_caption_is_uninformative() {
        let data = vec![cap(0, "a person", 0), cap(1, "a person", 1)];
        let model = HashedLogisticTrainer::default().train(&data, 2, 3).unwrap();
        let p = model.predict_proba("a person");
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9, "{p:?}");
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_demographic_errors() {
        let data = vec![cap(0, "a person", 0)];
        assert!(HashedLogisticTrainer::default().train(&data, 2, 0).is_err());
    }

    #[test]
    fn identical_sets_give_zero() {
        let data: Vec<_> = (0..40).map(|i| cap(i, &format!("thing {} here", i % 7), i % 2)).collect();
        let r = lic(&data, &data, 2, 11, &LeakageConfig::default()).unwrap();
        assert_eq!(r.lic, 0.0);
    }

    #[test]
    fn caption_order_does_not_matter() {
        let data: Vec<_> = (0..40).map(|i| cap(i, &format!("thing {} here", i % 7), i % 2)).collect();
        let mut rev = data.clone();
        rev.reverse();
        let a = lic(&data, &data, 2, 5, &LeakageConfig::default()).unwrap();
        let b = lic(&rev, &rev, 2, 5, &LeakageConfig::default()).unwrap();
        assert_eq!(a.lic_gt, b.lic_gt);
    }
}
