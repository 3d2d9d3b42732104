//! Local views of the data: k-means per embedding space, clusters matched
//! across spaces into shared groups, and bias measured per group.

mod groups;
mod kmeans;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

pub use groups::{exhaustive_best_combination, match_groups, Group, GroupAssignment, DEFAULT_MIN_SIZE};
pub use kmeans::{kmeans, Clustering, KMeansParams, DEFAULT_K, DEFAULT_MAX_ITER};

use crate::transfer::{spearman_defined, CorrelationOutcome, PValueMethod};
use crate::value::MetricValue;

pub const GLOBAL_ROW: &str = "global";

/// Bias values with one row per data view (global first, then groups) and
/// one column per model.
#[derive(Debug, Clone, Serialize)]
pub struct BiasTable {
    pub metric: String,
    pub attribute: String,
    pub models: Vec<String>,
    pub rows: Vec<BiasRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasRow {
    pub view: String,
    pub size: usize,
    pub values: Vec<MetricValue>,
}

impl BiasTable {
    pub fn row(&self, view: &str) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.view == view)
    }
}

/// Evaluates `metric(model, ids)` on the whole id set (row `global`, when
/// given) and on each group's members. Undefined values are kept as-is.
pub fn per_group_bias<F>(
    metric_name: &str,
    attribute: &str,
    groups: &GroupAssignment,
    models: &[String],
    universe: Option<&BTreeSet<String>>,
    metric: F,
) -> BiasTable
where
    F: Fn(&str, &BTreeSet<String>) -> MetricValue + Sync,
{
    let mut views: Vec<(String, &BTreeSet<String>)> = Vec::new();
    if let Some(all) = universe {
        views.push((GLOBAL_ROW.to_string(), all));
    }
    views.extend(groups.groups.iter().map(|g| (g.id.clone(), &g.members)));
    let rows = views
        .par_iter()
        .map(|(view, ids)| BiasRow {
            view: view.clone(),
            size: ids.len(),
            values: models.iter().map(|m| metric(m, ids)).collect(),
        })
        .collect();
    BiasTable {
        metric: metric_name.to_string(),
        attribute: attribute.to_string(),
        models: models.to_vec(),
        rows,
    }
}

/// Spearman correlation between the global row and every row of the table
/// across models, dropping models with an undefined value on either side.
/// The global row against itself is included (trivially 1).
pub fn global_local_correlation(table: &BiasTable, method: &PValueMethod) -> Vec<(String, CorrelationOutcome)> {
    let Some(global) = table.row(GLOBAL_ROW) else {
        return table
            .rows
            .iter()
            .map(|r| (r.view.clone(), CorrelationOutcome::Undefined("no global row".into())))
            .collect();
    };
    table
        .rows
        .iter()
        .map(|r| (r.view.clone(), spearman_defined(&global.values, &r.values, method)))
        .collect()
}
