use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Clustering;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SIZE: usize = 100;

/// Samples that fall into one matched cluster in every model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub members: BTreeSet<String>,
    /// Source cluster index per model id.
    pub clusters: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub groups: Vec<Group>,
    #[serde(default)]
    pub min_size: usize,
    #[serde(default)]
    pub reference: String,
    /// Tied-overlap decisions made while chaining, for inspection.
    #[serde(default)]
    pub ambiguities: Vec<String>,
}

impl GroupAssignment {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let groups: GroupAssignment = serde_json::from_str(&text)?;
        let mut seen = BTreeSet::new();
        for g in &groups.groups {
            if !seen.insert(g.id.as_str()) {
                return Err(Error::DuplicateId(g.id.clone()));
            }
        }
        Ok(groups)
    }
}

fn check_same_ids(clusterings: &[Clustering]) -> Result<()> {
    let first = clusterings.first().ok_or_else(|| Error::invalid("at least one clustering is required"))?;
    for c in &clusterings[1..] {
        if c.ids != first.ids {
            return Err(Error::Shape(format!(
                "clusterings `{}` and `{}` cover different sample ids",
                first.model_id, c.model_id
            )));
        }
    }
    let mut models: Vec<&str> = clusterings.iter().map(|c| c.model_id.as_str()).collect();
    models.sort_unstable();
    if let Some(w) = models.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateId(w[0].to_string()));
    }
    Ok(())
}

/// Greedy cross-model cluster matching.
///
/// For every cluster of the reference clustering (by default the
/// lexicographically first model id), the member set is intersected in turn
/// with the maximum-overlap cluster of each other clustering, visited in model
/// id order; overlap ties go to the lower cluster index. Chains whose final
/// intersection holds at least `min_size` samples become groups, emitted by
/// descending size and named `g0`, `g1`, ...
pub fn match_groups(clusterings: &[Clustering], min_size: usize, reference: Option<&str>) -> Result<GroupAssignment> {
    check_same_ids(clusterings)?;
    let reference = match reference {
        Some(r) => clusterings
            .iter()
            .find(|c| c.model_id == r)
            .ok_or_else(|| Error::invalid(format!("reference model `{r}` not among the clusterings")))?,
        None => clusterings.iter().min_by(|a, b| a.model_id.cmp(&b.model_id)).expect("non-empty"),
    };
    let mut others: Vec<&Clustering> = clusterings.iter().filter(|c| c.model_id != reference.model_id).collect();
    others.sort_by(|a, b| a.model_id.cmp(&b.model_id));

    let mut ambiguities = Vec::new();
    let mut candidates = Vec::new();
    for start in 0..reference.k {
        // Work on row positions; all clusterings share the sorted id list.
        let mut rows: Vec<usize> = (0..reference.ids.len())
            .filter(|&i| reference.assignment[i] == start)
            .collect();
        let mut chosen = BTreeMap::from([(reference.model_id.clone(), start)]);
        for other in &others {
            let mut overlap = vec![0usize; other.k];
            for &i in &rows {
                overlap[other.assignment[i]] += 1;
            }
            let best = overlap.iter().copied().max().unwrap_or(0);
            let pick = overlap.iter().position(|&o| o == best).unwrap_or(0);
            if best > 0 && overlap.iter().filter(|&&o| o == best).count() > 1 {
                ambiguities.push(format!(
                    "chain from {}:{start}: tied overlap {best} in `{}`, took cluster {pick}",
                    reference.model_id, other.model_id
                ));
            }
            rows.retain(|&i| other.assignment[i] == pick);
            chosen.insert(other.model_id.clone(), pick);
        }
        if rows.len() >= min_size && !rows.is_empty() {
            candidates.push((start, rows, chosen));
        }
    }
    candidates.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let groups = candidates
        .into_iter()
        .enumerate()
        .map(|(n, (_, rows, clusters))| Group {
            id: format!("g{n}"),
            members: rows.iter().map(|&i| reference.ids[i].clone()).collect(),
            clusters,
        })
        .collect();
    Ok(GroupAssignment {
        groups,
        min_size,
        reference: reference.model_id.clone(),
        ambiguities,
    })
}

/// Largest intersection over every combination of one cluster per model,
/// by exhaustive enumeration. Returns the size and the chosen cluster per
/// clustering (input order). Refuses searches above `limit` combinations.
pub fn exhaustive_best_combination(clusterings: &[Clustering], limit: u64) -> Result<(usize, Vec<usize>)> {
    check_same_ids(clusterings)?;
    let total = clusterings
        .iter()
        .try_fold(1u64, |acc, c| acc.checked_mul(c.k as u64))
        .filter(|&t| t <= limit)
        .ok_or_else(|| Error::invalid("too many cluster combinations for exhaustive search"))?;
    let n = clusterings[0].ids.len();
    let mut combo = vec![0usize; clusterings.len()];
    let mut best: Option<(usize, Vec<usize>)> = None;
    for _ in 0..total {
        let size = (0..n)
            .filter(|&i| clusterings.iter().zip(&combo).all(|(c, &k)| c.assignment[i] == k))
            .count();
        if best.as_ref().is_none_or(|b| size > b.0) {
            best = Some((size, combo.clone()));
        }
        // Odometer increment over the combination digits.
        for (digit, c) in combo.iter_mut().zip(clusterings) {
            *digit += 1;
            if *digit < c.k {
                break;
            }
            *digit = 0;
        }
    }
    Ok(best.expect("at least one combination"))
}
