//! Directional bias amplification, attribute -> answer direction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::normalize_answer;
use crate::data::{DemographicPartition, ProtectedAttribute, VqaEntry};
use crate::error::{Error, Result};

pub const DEFAULT_TOP_N: usize = 50;

/// One question with its demographic, ground-truth answer and predicted answer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DbaSample {
    pub qid: String,
    pub demographic: usize,
    pub truth: String,
    pub predicted: String,
}

/// Ground truth and predictions over the same questions.
#[derive(Debug, Clone, PartialEq)]
pub struct DbaInputs {
    attribute: ProtectedAttribute,
    samples: Vec<DbaSample>,
}

impl DbaInputs {
    pub fn new(attribute: ProtectedAttribute, mut samples: Vec<DbaSample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.demographic >= attribute.len()) {
            return Err(Error::invalid(format!(
                "question {} has demographic index {} outside `{}`",
                s.qid,
                s.demographic,
                attribute.name()
            )));
        }
        samples.sort();
        if let Some(w) = samples.windows(2).find(|w| w[0].qid == w[1].qid) {
            return Err(Error::DuplicateId(w[0].qid.clone()));
        }
        Ok(Self { attribute, samples })
    }

    /// Builds inputs from VQA entries. The ground-truth answer of a question is
    /// its most frequent normalized annotator answer (ties to the
    /// lexicographically smallest); answers are normalized on both sides.
    pub fn from_vqa(entries: &[VqaEntry], partition: &DemographicPartition) -> Result<Self> {
        let mut samples = Vec::new();
        for e in entries {
            let Some(d) = partition.demographic_of(&e.id) else {
                continue;
            };
            let mut freq: BTreeMap<String, usize> = BTreeMap::new();
            for g in &e.gt {
                *freq.entry(normalize_answer(g)).or_default() += 1;
            }
            let truth = freq
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(a, _)| a.clone())
                .ok_or_else(|| Error::invalid(format!("question {} has no answers", e.qid)))?;
            samples.push(DbaSample {
                qid: format!("{}/{}", e.id, e.qid),
                demographic: d,
                truth,
                predicted: normalize_answer(&e.pred),
            });
        }
        Self::new(partition.attribute().clone(), samples)
    }

    pub fn attribute(&self) -> &ProtectedAttribute {
        &self.attribute
    }

    pub fn samples(&self) -> &[DbaSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct ground-truth answers, sorted.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.truth.as_str()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterSummary {
    pub removed_binary: usize,
    pub removed_numeric: usize,
    pub removed_rare: usize,
    pub kept: usize,
    pub vocabulary: usize,
}

fn is_binary(answer: &str) -> bool {
    matches!(answer.trim().to_lowercase().as_str(), "yes" | "no")
}

/// Integer or decimal numeral, optionally signed: `3`, `-2`, `0.5`, `.5`, `4.`.
fn is_numeric(answer: &str) -> bool {
    let s = answer.trim();
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    let has_digit = !int.is_empty() || frac.is_some_and(|f| !f.is_empty());
    has_digit && digits(int) && frac.is_none_or(digits)
}

/// Drops questions whose ground-truth answer is yes/no, a numeral, or not
/// among the `top_n` most frequent remaining answers (frequency ties broken
/// lexicographically). Predictions follow their questions.
pub fn filter_answers(inputs: &DbaInputs, top_n: usize) -> (DbaInputs, FilterSummary) {
    let mut summary = FilterSummary::default();
    let mut candidates = Vec::new();
    for s in &inputs.samples {
        if is_binary(&s.truth) {
            summary.removed_binary += 1;
        } else if is_numeric(&s.truth) {
            summary.removed_numeric += 1;
        } else {
            candidates.push(s);
        }
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for s in &candidates {
        *freq.entry(s.truth.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep: BTreeSet<&str> = ranked.iter().take(top_n).map(|(a, _)| *a).collect();
    let samples: Vec<DbaSample> = candidates
        .into_iter()
        .filter(|s| {
            let kept = keep.contains(s.truth.as_str());
            if !kept {
                summary.removed_rare += 1;
            }
            kept
        })
        .cloned()
        .collect();
    summary.kept = samples.len();
    summary.vocabulary = keep.len();
    (
        DbaInputs {
            attribute: inputs.attribute.clone(),
            samples,
        },
        summary,
    )
}

/// One (demographic, answer) cell of the amplification sum.
#[derive(Debug, Clone, Serialize)]
pub struct DbaCell {
    pub demographic: usize,
    pub answer: String,
    /// Whether the pair is positively correlated in the ground truth.
    pub correlated: bool,
    /// P_pred(t | a) - P_truth(t | a).
    pub delta: f64,
    /// `u * delta - (1 - u) * delta`.
    pub term: f64,
    /// `delta * (2u - 1)`, algebraically equal to `term`.
    pub term_signed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DbaResult {
    pub value: f64,
    pub demographics: usize,
    pub vocabulary: usize,
    pub samples: usize,
    pub diagnostics: Vec<String>,
}

struct Counts<'a> {
    answers: Vec<&'a str>,
    n: u64,
    per_demo: Vec<u64>,
    per_answer: Vec<u64>,
    joint_truth: Vec<Vec<u64>>,
    joint_pred: Vec<Vec<u64>>,
}

fn count(inputs: &DbaInputs) -> Counts<'_> {
    let answers: Vec<&str> = inputs.vocabulary().into_iter().collect();
    let index: HashMap<&str, usize> = answers.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let na = inputs.attribute.len();
    let mut c = Counts {
        n: inputs.samples.len() as u64,
        per_demo: vec![0; na],
        per_answer: vec![0; answers.len()],
        joint_truth: vec![vec![0; answers.len()]; na],
        joint_pred: vec![vec![0; answers.len()]; na],
        answers,
    };
    for s in &inputs.samples {
        let t = index[s.truth.as_str()];
        c.per_demo[s.demographic] += 1;
        c.per_answer[t] += 1;
        c.joint_truth[s.demographic][t] += 1;
        if let Some(&p) = index.get(s.predicted.as_str()) {
            c.joint_pred[s.demographic][p] += 1;
        }
    }
    c
}

/// Every (demographic, answer) cell with both forms of its term.
pub fn dba_terms(inputs: &DbaInputs) -> Result<(Vec<DbaCell>, Vec<String>)> {
    if inputs.samples.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let c = count(inputs);
    let mut diagnostics = Vec::new();
    let mut cells = Vec::with_capacity(inputs.attribute.len() * c.answers.len());
    for (a, name) in inputs.attribute.demographics().iter().enumerate() {
        let n_a = c.per_demo[a];
        if n_a == 0 {
            diagnostics.push(format!(
                "demographic `{name}` has no questions; its conditional probabilities are taken as 0"
            ));
        }
        for (t, answer) in c.answers.iter().enumerate() {
            // P(a,t) > P(a) P(t), compared exactly on counts.
            let correlated = (c.joint_truth[a][t] as u128) * (c.n as u128)
                > (n_a as u128) * (c.per_answer[t] as u128);
            let delta = if n_a == 0 {
                0.0
            } else {
                c.joint_pred[a][t] as f64 / n_a as f64 - c.joint_truth[a][t] as f64 / n_a as f64
            };
            let u = if correlated { 1.0 } else { 0.0 };
            cells.push(DbaCell {
                demographic: a,
                answer: answer.to_string(),
                correlated,
                delta,
                term: u * delta - (1.0 - u) * delta,
                term_signed: delta * (2.0 * u - 1.0),
            });
        }
    }
    Ok((cells, diagnostics))
}

/// Directional bias amplification averaged over all (demographic, answer)
/// pairs of the ground-truth vocabulary.
pub fn dba(inputs: &DbaInputs) -> Result<DbaResult> {
    let (cells, diagnostics) = dba_terms(inputs)?;
    let vocabulary = inputs.vocabulary().len();
    let demographics = inputs.attribute.len();
    let total: f64 = cells.iter().map(|c| c.term).sum();
    Ok(DbaResult {
        value: total / (demographics * vocabulary) as f64,
        demographics,
        vocabulary,
        samples: inputs.samples.len(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr() -> ProtectedAttribute {
        ProtectedAttribute::new("gender", vec!["m".into(), "f".into()]).unwrap()
    }

    fn sample(i: usize, d: usize, truth: &str, pred: &str) -> DbaSample {
        DbaSample {
            qid: format!("q{i:03}"),
            demographic: d,
            truth: truth.into(),
            predicted: pred.into(),
        }
    }

    /// GT: (m,red)x3 (m,blue)x1 (f,red)x1 (f,blue)x3; predictions: m -> red, f -> blue.
    fn worked_example() -> DbaInputs {
        let mut s = Vec::new();
        let rows = [(0, "red", 3), (0, "blue", 1), (1, "red", 1), (1, "blue", 3)];
        for (d, truth, n) in rows {
            for _ in 0..n {
                let pred = if d == 0 { "red" } else { "blue" };
                s.push(sample(s.len(), d, truth, pred));
            }
        }
        DbaInputs::new(attr(), s).unwrap()
    }

    #[test]
    fn worked_example_is_quarter() {
        let r = dba(&worked_example()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identical_predictions_give_zero() {
        let inputs = worked_example();
        let same: Vec<DbaSample> = inputs
            .samples()
            .iter()
            .map(|s| DbaSample {
                predicted: s.truth.clone(),
                ..s.clone()
            })
            .collect();
        let r = dba(&DbaInputs::new(attr(), same).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn filter_rules() {
        let s = vec![sample(0, 0, "yes", "no"), sample(1, 0, "3", "3"), sample(2, 1, "red", "red")];
        let (f, summary) = filter_answers(&DbaInputs::new(attr(), s).unwrap(), 50);
        assert_eq!(f.samples().len(), 1);
        assert_eq!(f.samples()[0].truth, "red");
        assert_eq!(summary.removed_binary, 1);
        assert_eq!(summary.removed_numeric, 1);
    }

    #[test]
    fn filter_caps_vocabulary_and_is_idempotent() {
        let s: Vec<DbaSample> = (0..60).map(|i| sample(i, i % 2, &format!("ans{i:02}"), "x")).collect();
        let (f, _) = filter_answers(&DbaInputs::new(attr(), s).unwrap(), 50);
        assert!(f.vocabulary().len() <= 50);
        let (g, _) = filter_answers(&f, 50);
        assert_eq!(f, g);
    }

    #[test]
    fn numerals() {
        for yes in ["3", "-2", "0.5", ".5", "4.", "+10"] {
            assert!(is_numeric(yes), "{yes}");
        }
        for no in ["three", "3d", ".", "-", "", "1.2.3", "inf", "nan"] {
            assert!(!is_numeric(no), "{no}");
        }
    }

    #[test]
    fn empty_vocabulary_errors() {
        let inputs = DbaInputs::new(attr(), vec![]).unwrap();
        assert!(matches!(dba(&inputs), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn missing_demographic_is_diagnosed() {
        let s = vec![sample(0, 0, "red", "blue"), sample(1, 0, "blue", "blue")];
        let r = dba(&DbaInputs::new(attr(), s).unwrap()).unwrap();
        assert_eq!(r.diagnostics.len(), 1);
    }
}
