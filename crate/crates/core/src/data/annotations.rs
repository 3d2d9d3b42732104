use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A protected attribute and its demographics, in a fixed order that every
/// per-demographic vector in the toolkit follows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAttribute")]
pub struct ProtectedAttribute {
    name: String,
    demographics: Vec<String>,
}

#[derive(Deserialize)]
struct RawAttribute {
    name: String,
    demographics: Vec<String>,
}

impl TryFrom<RawAttribute> for ProtectedAttribute {
    type Error = Error;

    fn try_from(raw: RawAttribute) -> Result<Self> {
        ProtectedAttribute::new(raw.name, raw.demographics)
    }
}

impl ProtectedAttribute {
    pub fn new(name: impl Into<String>, demographics: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidAttribute("attribute name is empty".into()));
        }
        if demographics.len() < 2 {
            return Err(Error::InvalidAttribute(format!(
                "`{name}` needs at least two demographics"
            )));
        }
        let mut seen = HashSet::new();
        for d in &demographics {
            if d.is_empty() {
                return Err(Error::InvalidAttribute(format!("`{name}` has an empty label")));
            }
            if !seen.insert(d.as_str()) {
                return Err(Error::InvalidAttribute(format!("`{name}` repeats label `{d}`")));
            }
        }
        Ok(Self { name, demographics })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn demographics(&self) -> &[String] {
        &self.demographics
    }

    pub fn len(&self) -> usize {
        self.demographics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demographics.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.demographics.iter().position(|d| d == label)
    }
}

/// The attribute schema file: `{"attributes":[{"name":..,"demographics":[..]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<ProtectedAttribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<ProtectedAttribute>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name()) {
                return Err(Error::InvalidAttribute(format!("duplicate attribute `{}`", a.name())));
            }
        }
        Ok(Self { attributes })
    }

    pub fn get(&self, name: &str) -> Result<&ProtectedAttribute> {
        self.attributes
            .iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: AttributeSchema = serde_json::from_str(&text)?;
        Self::new(schema.attributes)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct AnnotationLine {
    id: String,
    #[serde(default)]
    attributes: BTreeMap<String, Option<String>>,
}

type Rows = BTreeMap<String, BTreeMap<String, String>>;

fn parse_rows(text: &str, file: &str) -> Result<Rows> {
    let mut rows = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            file: file.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let labels: BTreeMap<String, String> = parsed
            .attributes
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
        if rows.insert(parsed.id.clone(), labels).is_some() {
            return Err(Error::DuplicateId(parsed.id));
        }
    }
    Ok(rows)
}

/// Per-sample demographic labels, validated against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    schema: AttributeSchema,
    rows: BTreeMap<String, BTreeMap<String, String>>,
}

impl AnnotationTable {
    pub fn new(
        schema: AttributeSchema,
        rows: BTreeMap<String, BTreeMap<String, String>>,
    ) -> Result<Self> {
        for labels in rows.values() {
            for (attr, label) in labels {
                let attribute = schema.get(attr)?;
                if attribute.index_of(label).is_none() {
                    return Err(Error::UnknownLabel {
                        attribute: attr.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(Self { schema, rows })
    }

    /// Parses the JSON-lines annotation format. A `null` label is the same as
    /// an absent one.
    pub fn parse_jsonl(schema: AttributeSchema, text: &str, file: &str) -> Result<Self> {
        Self::new(schema, parse_rows(text, file)?)
    }

    /// Parses annotations without a schema file. Each attribute's
    /// demographics are the distinct labels seen, in lexicographic order.
    pub fn parse_jsonl_inferred(text: &str, file: &str) -> Result<Self> {
        let rows = parse_rows(text, file)?;
        let mut seen: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for labels in rows.values() {
            for (attr, label) in labels {
                seen.entry(attr).or_default().insert(label);
            }
        }
        let attributes = seen
            .into_iter()
            .map(|(name, labels)| ProtectedAttribute::new(name, labels.into_iter().map(String::from).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(AttributeSchema::new(attributes)?, rows)
    }

    pub fn load_inferred(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl_inferred(&text, &path.display().to_string())
    }

    pub fn load(schema: AttributeSchema, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(schema, &text, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, labels) in &self.rows {
            let line = AnnotationLine {
                id: id.clone(),
                attributes: labels.iter().map(|(k, v)| (k.clone(), Some(v.clone()))).collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("annotation serializes"));
            out.push('\n');
        }
        out
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.rows.contains_key(id)
    }

    pub fn label(&self, id: &str, attribute: &str) -> Option<&str> {
        self.rows.get(id)?.get(attribute).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.rows.keys()
    }
}

/// Samples grouped by their demographic for one attribute.
///
/// `excluded` counts annotated samples with no label for the attribute;
/// `unannotated` counts requested ids the table does not know at all.
#[derive(Debug, Clone, PartialEq)]
pub struct DemographicPartition {
    attribute: ProtectedAttribute,
    buckets: Vec<BTreeSet<String>>,
    excluded: usize,
    unannotated: usize,
}

impl DemographicPartition {
    pub fn from_buckets(attribute: ProtectedAttribute, buckets: Vec<BTreeSet<String>>) -> Result<Self> {
        if buckets.len() != attribute.len() {
            return Err(Error::Shape(format!(
                "{} buckets for {} demographics",
                buckets.len(),
                attribute.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in buckets.iter().flatten() {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            attribute,
            buckets,
            excluded: 0,
            unannotated: 0,
        })
    }

    pub fn attribute(&self) -> &ProtectedAttribute {
        &self.attribute
    }

    /// Buckets in the attribute's demographic order.
    pub fn buckets(&self) -> &[BTreeSet<String>] {
        &self.buckets
    }

    pub fn bucket(&self, demographic: &str) -> Option<&BTreeSet<String>> {
        self.attribute.index_of(demographic).map(|i| &self.buckets[i])
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn unannotated(&self) -> usize {
        self.unannotated
    }

    pub fn counts(&self) -> Vec<usize> {
        self.buckets.iter().map(BTreeSet::len).collect()
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(BTreeSet::len).sum()
    }

    /// Demographic index of `id`, if it is bucketed.
    pub fn demographic_of(&self, id: &str) -> Option<usize> {
        self.buckets.iter().position(|b| b.contains(id))
    }

    /// Bucketed ids with their demographic index, in ascending id order.
    pub fn labeled_ids(&self) -> Vec<(&str, usize)> {
        let mut out: Vec<(&str, usize)> = self
            .buckets
            .iter()
            .enumerate()
            .flat_map(|(d, b)| b.iter().map(move |id| (id.as_str(), d)))
            .collect();
        out.sort_unstable();
        out
    }

    /// The same partition with every bucket intersected with `ids`.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> Self {
        Self {
            attribute: self.attribute.clone(),
            buckets: self
                .buckets
                .iter()
                .map(|b| b.intersection(ids).cloned().collect())
                .collect(),
            excluded: 0,
            unannotated: 0,
        }
    }
}

/// Buckets `ids` by their label for `attribute`. Samples without a label are
/// excluded rather than collected under an "unknown" bucket.
pub fn partition_by_demographic<'a, I>(
    annotations: &AnnotationTable,
    attribute: &ProtectedAttribute,
    ids: I,
) -> Result<DemographicPartition>
where
    I: IntoIterator<Item = &'a str>,
{
    let known = annotations.schema().get(attribute.name())?;
    if known != attribute {
        return Err(Error::UnknownAttribute(format!(
            "{} (demographics differ from the annotation schema)",
            attribute.name()
        )));
    }
    let mut buckets = vec![BTreeSet::new(); attribute.len()];
    let mut excluded = 0;
    let mut unannotated = 0;
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            continue;
        }
        if !annotations.contains(id) {
            unannotated += 1;
            continue;
        }
        match annotations.label(id, attribute.name()) {
            Some(label) => {
                let d = attribute.index_of(label).expect("labels validated at load");
                buckets[d].insert(id.to_string());
            }
            None => excluded += 1,
        }
    }
    Ok(DemographicPartition {
        attribute: attribute.clone(),
        buckets,
        excluded,
        unannotated,
    })
}
