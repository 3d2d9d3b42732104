//! Rank correlation between bias measured before and after adaptation:
//! Spearman's rho with p-values, the metric-combination sweep and the
//! two-demographic gap quadrants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng;
use crate::value::MetricValue;

/// Largest n for which `PValueMethod::Auto` enumerates permutations.
pub const EXACT_MAX_N: usize = 8;
pub const DEFAULT_MC_DRAWS: usize = 100_000;
/// Slack when counting permuted statistics at least as extreme as observed.
const EXTREME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrelationError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 paired values, got {0}")]
    TooFew(usize),
    #[error("constant vector, rank correlation undefined")]
    Constant,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Exact enumeration for n up to 8, t approximation above.
    #[default]
    Auto,
    TApprox,
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PMethodUsed {
    TApprox,
    Permutation,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PMethodUsed,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_standard_error: Option<f64>,
    pub strength: &'static str,
}

/// A correlation that may be undefined, e.g. after pairwise dropping left
/// fewer than three models.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationOutcome {
    Defined(CorrelationResult),
    Undefined(String),
}

impl CorrelationOutcome {
    pub fn rho(&self) -> Option<f64> {
        match self {
            CorrelationOutcome::Defined(r) => Some(r.rho),
            CorrelationOutcome::Undefined(_) => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            CorrelationOutcome::Defined(r) => Some(r.p_value),
            CorrelationOutcome::Undefined(_) => None,
        }
    }
}

impl Serialize for CorrelationOutcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CorrelationOutcome::Defined(r) => r.serialize(s),
            CorrelationOutcome::Undefined(reason) => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("p_value", &None::<f64>)?;
                m.serialize_entry("reason", reason)?;
                m.serialize_entry("rho", &None::<f64>)?;
                m.end()
            }
        }
    }
}

/// Strength annotation for |rho|: none, poor, fair, moderate, very strong
/// and perfect, at cut points 0.3, 0.6 and 0.8.
pub fn strength_label(rho: f64) -> &'static str {
    let r = rho.abs();
    if r == 0.0 {
        "none"
    } else if r >= 1.0 {
        "perfect"
    } else if r >= 0.8 {
        "very strong"
    } else if r >= 0.6 {
        "moderate"
    } else if r >= 0.3 {
        "fair"
    } else {
        "poor"
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn rank_average(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end averaged.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spearman's rho as the Pearson correlation of tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64], method: &PValueMethod) -> std::result::Result<CorrelationResult, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite(i % x.len().max(1)));
    }
    let n = x.len();
    if n < 3 {
        return Err(CorrelationError::TooFew(n));
    }
    let cx = centered(&rank_average(x));
    let cy = centered(&rank_average(y));
    let (sxx, syy) = (dot(&cx, &cx), dot(&cy, &cy));
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::Constant);
    }
    let denom = (sxx * syy).sqrt();
    let rho = (dot(&cx, &cy) / denom).clamp(-1.0, 1.0);

    let method = match method {
        PValueMethod::Auto if n <= EXACT_MAX_N => PValueMethod::Exact,
        PValueMethod::Auto => PValueMethod::TApprox,
        m => *m,
    };
    let (p_value, used, se) = match method {
        PValueMethod::Exact => (exact_p(&cx, &cy, denom), PMethodUsed::Permutation, None),
        PValueMethod::MonteCarlo { draws, seed } => {
            let p = monte_carlo_p(&cx, &cy, denom, draws, seed);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            (p, PMethodUsed::MonteCarlo, Some(se))
        }
        _ => (t_approx_p(rho, n), PMethodUsed::TApprox, None),
    };
    Ok(CorrelationResult {
        rho,
        p_value,
        n,
        method: used,
        mc_standard_error: se,
        strength: strength_label(rho),
    })
}

/// Two-sided p from t = rho * sqrt((n - 2) / (1 - rho^2)) on n - 2 degrees of freedom.
pub fn t_approx_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn exact_p(cx: &[f64], cy: &[f64], denom: f64) -> f64 {
    let observed = (dot(cx, cy) / denom).abs();
    let n = cy.len();
    let mut perm = cy.to_vec();
    let mut hits = 0u64;
    let mut total = 0u64;
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut visit = |p: &[f64]| {
        total += 1;
        if (dot(cx, p) / denom).abs() >= observed - EXTREME_TOL {
            hits += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

fn monte_carlo_p(cx: &[f64], cy: &[f64], denom: f64, draws: usize, seed: u64) -> f64 {
    let observed = (dot(cx, cy) / denom).abs();
    let mut rng = rng::stream(seed, rng::streams::PERMUTATION);
    let mut perm = cy.to_vec();
    let mut hits = 0usize;
    for _ in 0..draws {
        perm.shuffle(&mut rng);
        if (dot(cx, &perm) / denom).abs() >= observed - EXTREME_TOL {
            hits += 1;
        }
    }
    hits as f64 / draws.max(1) as f64
}

/// Spearman over the positions where both values are defined.
pub fn spearman_defined(x: &[MetricValue], y: &[MetricValue], method: &PValueMethod) -> CorrelationOutcome {
    if x.len() != y.len() {
        return CorrelationOutcome::Undefined(CorrelationError::LengthMismatch(x.len(), y.len()).to_string());
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some((a.value()?, b.value()?)))
        .unzip();
    match spearman(&xs, &ys, method) {
        Ok(r) => CorrelationOutcome::Defined(r),
        Err(e) => CorrelationOutcome::Undefined(e.to_string()),
    }
}

/// Per-demographic metric values for one (metric, attribute).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemographicValues {
    pub demographics: Vec<String>,
    /// Model id to one value per demographic, in `demographics` order.
    pub values: BTreeMap<String, Vec<Option<f64>>>,
}

type ModelValues = BTreeMap<String, Option<f64>>;

/// Bias values per metric, attribute and model, plus optional
/// per-demographic breakdowns for gap analysis. `null` marks an undefined
/// value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricTable {
    #[serde(default)]
    pub metrics: BTreeMap<String, BTreeMap<String, ModelValues>>,
    #[serde(default)]
    pub per_demographic: BTreeMap<String, BTreeMap<String, DemographicValues>>,
}

impl MetricTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: MetricTable = serde_json::from_str(&text)?;
        for (metric, attrs) in &table.per_demographic {
            for (attr, dv) in attrs {
                if let Some((model, v)) = dv.values.iter().find(|(_, v)| v.len() != dv.demographics.len()) {
                    return Err(Error::Shape(format!(
                        "{metric}/{attr}: model `{model}` has {} values for {} demographics",
                        v.len(),
                        dv.demographics.len()
                    )));
                }
            }
        }
        Ok(table)
    }

    pub fn insert(&mut self, metric: &str, attribute: &str, model: &str, value: &MetricValue) {
        self.metrics
            .entry(metric.to_string())
            .or_default()
            .entry(attribute.to_string())
            .or_default()
            .insert(model.to_string(), value.value());
    }

    pub fn insert_demographics(&mut self, metric: &str, attribute: &str, demographics: &[String], model: &str, values: &[MetricValue]) {
        let dv = self
            .per_demographic
            .entry(metric.to_string())
            .or_default()
            .entry(attribute.to_string())
            .or_insert_with(|| DemographicValues {
                demographics: demographics.to_vec(),
                values: BTreeMap::new(),
            });
        dv.values.insert(model.to_string(), values.iter().map(MetricValue::value).collect());
    }

    /// Merges `other` into `self`; entries in `other` win.
    pub fn merge(&mut self, other: MetricTable) {
        for (metric, attrs) in other.metrics {
            let slot = self.metrics.entry(metric).or_default();
            for (attr, models) in attrs {
                slot.entry(attr).or_default().extend(models);
            }
        }
        for (metric, attrs) in other.per_demographic {
            let slot = self.per_demographic.entry(metric).or_default();
            for (attr, dv) in attrs {
                match slot.get_mut(&attr) {
                    Some(existing) if existing.demographics == dv.demographics => existing.values.extend(dv.values),
                    _ => {
                        slot.insert(attr, dv);
                    }
                }
            }
        }
    }

    fn attributes(&self) -> BTreeSet<(&str, &str)> {
        self.metrics
            .iter()
            .flat_map(|(m, attrs)| attrs.keys().map(move |a| (m.as_str(), a.as_str())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combination {
    pub pre_metric: String,
    pub pre_attribute: String,
    pub down_metric: String,
    pub down_attribute: String,
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} vs {}/{}",
            self.pre_metric, self.pre_attribute, self.down_metric, self.down_attribute
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepPlan {
    /// Extra (pre attribute, downstream attribute) pairings beyond same-attribute ones.
    pub cross_attributes: Vec<(String, String)>,
    /// When set, exactly these combinations are evaluated.
    pub combinations: Option<Vec<Combination>>,
    pub method: PValueMethod,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    #[serde(flatten)]
    pub combination: Combination,
    pub models: Vec<String>,
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCombination {
    #[serde(flatten)]
    pub combination: Combination,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub results: Vec<SweepEntry>,
    pub skipped: Vec<SkippedCombination>,
}

impl Sweep {
    pub fn find(&self, c: &Combination) -> Option<&SweepEntry> {
        self.results.iter().find(|e| &e.combination == c)
    }
}

/// Correlates every pre-adaptation (metric, attribute) with every downstream
/// (metric, attribute) on the same attribute or a whitelisted cross pairing,
/// across the models present on both sides. Results are ordered by |rho|
/// descending, then by combination.
pub fn correlation_sweep(pre: &MetricTable, down: &MetricTable, plan: &SweepPlan) -> Sweep {
    let combos: Vec<Combination> = match &plan.combinations {
        Some(c) => c.clone(),
        None => {
            let mut out = Vec::new();
            for (pm, pa) in pre.attributes() {
                for (dm, da) in down.attributes() {
                    let cross = plan.cross_attributes.iter().any(|(p, d)| p == pa && d == da);
                    if pa == da || cross {
                        out.push(Combination {
                            pre_metric: pm.into(),
                            pre_attribute: pa.into(),
                            down_metric: dm.into(),
                            down_attribute: da.into(),
                        });
                    }
                }
            }
            out
        }
    };
    let evaluated: Vec<std::result::Result<SweepEntry, SkippedCombination>> = combos
        .into_par_iter()
        .map(|c| {
            let lookup = |t: &MetricTable, m: &str, a: &str| t.metrics.get(m).and_then(|x| x.get(a)).cloned();
            let skip = |c: Combination, reason: String| Err(SkippedCombination { combination: c, reason });
            let Some(px) = lookup(pre, &c.pre_metric, &c.pre_attribute) else {
                return skip(c, "pre-adaptation metric not present".into());
            };
            let Some(dy) = lookup(down, &c.down_metric, &c.down_attribute) else {
                return skip(c, "downstream metric not present".into());
            };
            let mut models = Vec::new();
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (model, x) in &px {
                if let (Some(x), Some(Some(y))) = (x, dy.get(model)) {
                    models.push(model.clone());
                    xs.push(*x);
                    ys.push(*y);
                }
            }
            match spearman(&xs, &ys, &plan.method) {
                Ok(result) => Ok(SweepEntry {
                    combination: c,
                    models,
                    result,
                }),
                Err(e) => skip(c, e.to_string()),
            }
        })
        .collect();
    let (mut results, mut skipped) = (Vec::new(), Vec::new());
    for e in evaluated {
        match e {
            Ok(r) => results.push(r),
            Err(s) => skipped.push(s),
        }
    }
    results.sort_by(|a, b| {
        b.result
            .rho
            .abs()
            .total_cmp(&a.result.rho.abs())
            .then_with(|| a.combination.cmp(&b.combination))
    });
    skipped.sort_by(|a, b| a.combination.cmp(&b.combination));
    Sweep { results, skipped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrant {
    I,
    II,
    III,
    IV,
    #[serde(rename = "axis")]
    Axis,
}

impl Quadrant {
    pub fn of(x: f64, y: f64) -> Quadrant {
        match (x.partial_cmp(&0.0), y.partial_cmp(&0.0)) {
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Greater)) => Quadrant::I,
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Greater)) => Quadrant::II,
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Less)) => Quadrant::III,
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Less)) => Quadrant::IV,
            _ => Quadrant::Axis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapPoint {
    pub model: String,
    pub pre_gap: f64,
    pub down_gap: f64,
    pub quadrant: Quadrant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    pub n: usize,
    /// Fraction of points in quadrants I or III (gaps share a sign).
    pub agree: f64,
    /// Fraction in quadrants II or IV.
    pub disagree: f64,
    pub axis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapAnalysis {
    pub demographics: [String; 2],
    pub points: Vec<GapPoint>,
    pub summary: GapSummary,
    /// Models lacking a defined value on either side.
    pub skipped: Vec<String>,
}

/// Gap `value(first) - value(second)` per model on both sides, and the share
/// of models whose two gaps agree in sign.
pub fn gap_quadrants(pre: &DemographicValues, down: &DemographicValues) -> Result<GapAnalysis> {
    for dv in [pre, down] {
        if dv.demographics.len() != 2 {
            return Err(Error::invalid(format!(
                "gap analysis needs exactly 2 demographics, got {}",
                dv.demographics.len()
            )));
        }
    }
    if pre.demographics != down.demographics {
        return Err(Error::Shape(format!(
            "demographic order differs: {:?} vs {:?}",
            pre.demographics, down.demographics
        )));
    }
    let gap = |v: &Vec<Option<f64>>| Some(v.first().copied()?? - v.get(1).copied()??);
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let models: BTreeSet<&String> = pre.values.keys().chain(down.values.keys()).collect();
    for model in models {
        match (pre.values.get(model).and_then(gap), down.values.get(model).and_then(gap)) {
            (Some(x), Some(y)) => points.push(GapPoint {
                model: model.clone(),
                pre_gap: x,
                down_gap: y,
                quadrant: Quadrant::of(x, y),
            }),
            _ => skipped.push(model.clone()),
        }
    }
    let n = points.len();
    let frac = |f: &dyn Fn(Quadrant) -> bool| {
        if n == 0 {
            0.0
        } else {
            points.iter().filter(|p| f(p.quadrant)).count() as f64 / n as f64
        }
    };
    let summary = GapSummary {
        n,
        agree: frac(&|q| matches!(q, Quadrant::I | Quadrant::III)),
        disagree: frac(&|q| matches!(q, Quadrant::II | Quadrant::IV)),
        axis: frac(&|q| q == Quadrant::Axis),
    };
    Ok(GapAnalysis {
        demographics: [pre.demographics[0].clone(), pre.demographics[1].clone()],
        points,
        summary,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let r = spearman(&x, &[1.0, 4.0, 9.0, 16.0], &PValueMethod::Auto).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.strength, "perfect");
        let r = spearman(&x, &[16.0, 9.0, 4.0, 1.0], &PValueMethod::Auto).unwrap();
        assert_eq!(r.rho, -1.0);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        assert_eq!(rank_average(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_average(&[3.0, 1.0, 3.0, 3.0]), vec![3.0, 1.0, 3.0, 3.0]);
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &PValueMethod::TApprox).unwrap();
        // ranks (1.5, 1.5, 3) vs (1, 2, 3): cov 1.5, var 1.5 and 2.
        assert!((r.rho - 1.5 / (1.5f64 * 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let m = PValueMethod::Auto;
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0], &m), Err(CorrelationError::TooFew(2)));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0], &m), Err(CorrelationError::LengthMismatch(3, 2)));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &m), Err(CorrelationError::Constant));
        assert!(matches!(
            spearman(&[1.0, f64::NAN, 1.0], &[1.0, 2.0, 3.0], &m),
            Err(CorrelationError::NonFinite(_))
        ));
    }

    #[test]
    fn exact_p_small_cases() {
        // n = 3, perfect order: 2 of 6 permutations reach |rho| = 1.
        let r = spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &PValueMethod::Exact).unwrap();
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.method, PMethodUsed::Permutation);
        // n = 4, perfect order: 2 of 24.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 7.0], &PValueMethod::Auto).unwrap();
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn t_approx_matches_known_value() {
        // rho = 0.5 with n = 12: t = 0.5 * sqrt(10 / 0.75), 10 degrees of freedom.
        let p = t_approx_p(0.5, 12);
        assert!((p - 0.097_854_614_257_812_5).abs() < 1e-12, "{p}");
        assert_eq!(t_approx_p(1.0, 10), 0.0);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let m = PValueMethod::MonteCarlo { draws: 2000, seed: 7 };
        let a = spearman(&x, &y, &m).unwrap();
        let b = spearman(&x, &y, &m).unwrap();
        assert_eq!(a, b);
        assert!(a.mc_standard_error.unwrap() > 0.0);
    }

    #[test]
    fn strength_cut_points() {
        assert_eq!(strength_label(0.0), "none");
        assert_eq!(strength_label(0.29), "poor");
        assert_eq!(strength_label(-0.3), "fair");
        assert_eq!(strength_label(0.61), "moderate");
        assert_eq!(strength_label(0.85), "very strong");
    }

    fn table(rows: &[(&str, &str, &[Option<f64>])]) -> MetricTable {
        let mut t = MetricTable::default();
        for (metric, attr, vals) in rows {
            for (i, v) in vals.iter().enumerate() {
                t.insert(metric, attr, &format!("m{i}"), &MetricValue::from(*v));
            }
        }
        t
    }

    #[test]
    fn sweep_counts_and_order() {
        let up = [Some(0.1), Some(0.2), Some(0.3), Some(0.4)];
        let mixed = [Some(0.4), Some(0.1), Some(0.3), Some(0.2)];
        let pre = table(&[("recall-kl", "gender", &up), ("maxskew", "gender", &mixed)]);
        let down = table(&[("dba", "gender", &up), ("lic", "gender", &mixed)]);
        let sweep = correlation_sweep(&pre, &down, &SweepPlan::default());
        assert_eq!(sweep.results.len(), 4);
        assert!(sweep.skipped.is_empty());
        assert_eq!(sweep.results[0].result.rho.abs(), 1.0);
        for w in sweep.results.windows(2) {
            assert!(w[0].result.rho.abs() >= w[1].result.rho.abs());
        }
    }

    #[test]
    fn sweep_drops_undefined_pairwise_and_skips_disjoint() {
        let pre = table(&[("a", "g", &[Some(1.0), None, Some(3.0), Some(4.0)])]);
        let down = table(&[("b", "g", &[Some(1.0), Some(2.0), Some(5.0), Some(4.5)])]);
        let s = correlation_sweep(&pre, &down, &SweepPlan::default());
        assert_eq!(s.results[0].models, vec!["m0", "m2", "m3"]);

        let mut other = MetricTable::default();
        for i in 0..4 {
            other.insert("b", "g", &format!("z{i}"), &MetricValue::Defined(i as f64));
        }
        let s = correlation_sweep(&pre, &other, &SweepPlan::default());
        assert!(s.results.is_empty());
        assert_eq!(s.skipped.len(), 1);
    }

    #[test]
    fn cross_attribute_whitelist() {
        let v = [Some(0.1), Some(0.2), Some(0.3)];
        let pre = table(&[("a", "ethnicity", &v)]);
        let down = table(&[("b", "skintone", &v)]);
        assert!(correlation_sweep(&pre, &down, &SweepPlan::default()).results.is_empty());
        let plan = SweepPlan {
            cross_attributes: vec![("ethnicity".into(), "skintone".into())],
            ..Default::default()
        };
        assert_eq!(correlation_sweep(&pre, &down, &plan).results.len(), 1);
    }

    fn dv(vals: &[(f64, f64)]) -> DemographicValues {
        DemographicValues {
            demographics: vec!["a".into(), "b".into()],
            values: vals
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| (format!("m{i}"), vec![Some(x), Some(y)]))
                .collect(),
        }
    }

    #[test]
    fn gaps_agree_and_disagree() {
        let pre = dv(&[(0.5, 0.3), (0.2, 0.4), (0.1, 0.1)]);
        let same = gap_quadrants(&pre, &pre).unwrap();
        assert_eq!(same.summary.agree, 2.0 / 3.0);
        assert_eq!(same.summary.axis, 1.0 / 3.0);
        let flipped = dv(&[(0.3, 0.5), (0.4, 0.2), (0.1, 0.1)]);
        let g = gap_quadrants(&pre, &flipped).unwrap();
        assert_eq!(g.points[0].quadrant, Quadrant::IV);
        assert_eq!(g.points[1].quadrant, Quadrant::II);
        assert_eq!(g.summary.disagree, 2.0 / 3.0);
    }

    #[test]
    fn gaps_need_two_demographics() {
        let mut three = dv(&[(0.1, 0.2)]);
        three.demographics.push("c".into());
        assert!(gap_quadrants(&three, &three).is_err());
    }
}
