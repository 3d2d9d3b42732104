use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Vqa,
    Captioning,
    Scored,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vqa" => Ok(Task::Vqa),
            "caption" | "captioning" => Ok(Task::Captioning),
            "scored" => Ok(Task::Scored),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("expected string or number, got {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaEntry {
    pub id: String,
    #[serde(deserialize_with = "string_or_number")]
    pub qid: String,
    #[serde(default)]
    pub question: String,
    pub pred: String,
    pub gt: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaptionOrigin {
    #[serde(rename = "gt")]
    GroundTruth,
    #[serde(rename = "pred")]
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEntry {
    pub id: String,
    pub caption: String,
    pub origin: CaptionOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub id: String,
    pub metric: String,
    pub value: f64,
}

/// Downstream outputs for one task.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSet {
    Vqa(Vec<VqaEntry>),
    Captioning(Vec<CaptionEntry>),
    Scored(Vec<ScoredEntry>),
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: file.to_string(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn to_lines<T: Serialize>(entries: &[T]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    out
}

impl PredictionSet {
    pub fn task(&self) -> Task {
        match self {
            PredictionSet::Vqa(_) => Task::Vqa,
            PredictionSet::Captioning(_) => Task::Captioning,
            PredictionSet::Scored(_) => Task::Scored,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PredictionSet::Vqa(v) => v.len(),
            PredictionSet::Captioning(v) => v.len(),
            PredictionSet::Scored(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictionSet::Vqa(entries) => {
                let mut keys = HashSet::new();
                for e in entries {
                    if e.gt.is_empty() {
                        return Err(Error::invalid(format!(
                            "question {} of `{}` has no ground-truth answers",
                            e.qid, e.id
                        )));
                    }
                    if !keys.insert((e.id.as_str(), e.qid.as_str())) {
                        return Err(Error::DuplicateId(format!("{}/{}", e.id, e.qid)));
                    }
                }
            }
            PredictionSet::Scored(entries) => {
                let mut keys = HashSet::new();
                for e in entries {
                    if !e.value.is_finite() {
                        return Err(Error::invalid(format!(
                            "non-finite {} score for `{}`",
                            e.metric, e.id
                        )));
                    }
                    if !keys.insert((e.id.as_str(), e.metric.as_str())) {
                        return Err(Error::DuplicateId(format!("{}/{}", e.id, e.metric)));
                    }
                }
            }
            PredictionSet::Captioning(_) => {}
        }
        Ok(())
    }

    pub fn parse_jsonl(task: Task, text: &str, file: &str) -> Result<Self> {
        let set = match task {
            Task::Vqa => PredictionSet::Vqa(parse_lines(text, file)?),
            Task::Captioning => PredictionSet::Captioning(parse_lines(text, file)?),
            Task::Scored => PredictionSet::Scored(parse_lines(text, file)?),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn load(task: Task, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(task, &text, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> String {
        match self {
            PredictionSet::Vqa(v) => to_lines(v),
            PredictionSet::Captioning(v) => to_lines(v),
            PredictionSet::Scored(v) => to_lines(v),
        }
    }
}
