//! Report assembly and emission.
//!
//! Reports are written as canonical JSON: keys sorted at every level, floats
//! in shortest round-trip form, two-space indentation and a trailing newline.
//! Undefined values appear as `null` with a reason and never as `NaN`. The
//! CSV form flattens the same document into `field,value` rows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::local::BiasTable;
use crate::transfer::CorrelationOutcome;

pub const TOOL_NAME: &str = "bias-audit";
pub const TIMING_FIELD: &str = "timing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(role: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            role: role.into(),
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub elapsed_ms: u64,
}

/// One command's output: what ran, on which inputs, with which effective
/// parameters, and what came out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub tool: ToolInfo,
    pub command: String,
    pub params: Value,
    pub inputs: Vec<InputDigest>,
    pub results: Value,
    pub timing: Timing,
}

impl BiasReport {
    pub fn new(command: impl Into<String>, params: &impl Serialize, results: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: ToolInfo::default(),
            command: command.into(),
            params: serde_json::to_value(params)?,
            inputs: Vec::new(),
            results: serde_json::to_value(results)?,
            timing: Timing { elapsed_ms: 0 },
        })
    }

    /// Records the sha256 digest of each `(role, path)` input.
    pub fn digest_inputs<'a, I, P>(&mut self, inputs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, P)>,
        P: AsRef<Path>,
    {
        for (role, path) in inputs {
            self.inputs.push(InputDigest::of(role, path)?);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn to_csv(&self) -> Result<String> {
        flatten_csv(&serde_json::to_value(self)?)
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
        write_text(path, &self.render(format)?)
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(PathBuf::from(path), e))
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Serializes `value` with sorted keys and a trailing newline.
pub fn canonical_json(value: &impl Serialize) -> Result<String> {
    let v = sort_keys(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for k in keys {
                flatten(&join(k), &map[k], out);
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), item, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// One `field,value` row per leaf; nulls become empty cells.
pub fn flatten_csv(v: &Value) -> Result<String> {
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["field", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Local-vs-global correlations laid out with one row per (metric, attribute)
/// and one column per data view, global first.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationGrid {
    pub columns: Vec<String>,
    pub rows: Vec<GridRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub metric: String,
    pub attribute: String,
    pub cells: Vec<CorrelationOutcome>,
}

impl CorrelationGrid {
    /// Builds the grid from per-table correlations. Every table must list
    /// the same views in the same order.
    pub fn new(tables: &[(&BiasTable, Vec<(String, CorrelationOutcome)>)]) -> Result<Self> {
        let Some((_, first)) = tables.first() else {
            return Ok(Self {
                columns: Vec::new(),
                rows: Vec::new(),
            });
        };
        let columns: Vec<String> = first.iter().map(|(v, _)| v.clone()).collect();
        let mut rows = Vec::with_capacity(tables.len());
        for (table, corr) in tables {
            let views: Vec<&String> = corr.iter().map(|(v, _)| v).collect();
            if views.len() != columns.len() || views.iter().zip(&columns).any(|(a, b)| *a != b) {
                return Err(Error::Shape(format!(
                    "{}/{} has views {views:?}, expected {columns:?}",
                    table.metric, table.attribute
                )));
            }
            rows.push(GridRow {
                metric: table.metric.clone(),
                attribute: table.attribute.clone(),
                cells: corr.iter().map(|(_, c)| c.clone()).collect(),
            });
        }
        Ok(Self { columns, rows })
    }

    /// Plain-text table with `rho (p)` cells and `n/a` for undefined ones.
    pub fn render_text(&self) -> String {
        let mut header = vec!["metric".to_string(), "attribute".to_string()];
        header.extend(self.columns.iter().cloned());
        let mut lines = vec![header];
        for r in &self.rows {
            let mut line = vec![r.metric.clone(), r.attribute.clone()];
            line.extend(r.cells.iter().map(|c| match (c.rho(), c.p_value()) {
                (Some(rho), Some(p)) => format!("{rho:.2} ({p:.2})"),
                _ => "n/a".into(),
            }));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
