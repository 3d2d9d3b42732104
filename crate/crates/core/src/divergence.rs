//! KL-divergence of a performance vector from the equal-performance ideal.

use crate::value::MetricValue;

/// L1-normalizes `scores` and returns `KL(p || uniform)` in nats, treating
/// `0 * ln 0` as 0. Undefined if any score is missing, negative or
/// non-finite, or if all scores are zero.
pub fn kl_from_uniform(scores: &[Option<f64>]) -> MetricValue {
    if scores.is_empty() {
        return MetricValue::undefined("no demographics");
    }
    let mut values = Vec::with_capacity(scores.len());
    for (i, s) in scores.iter().enumerate() {
        match s {
            None => return MetricValue::undefined(format!("score for demographic #{i} is undefined")),
            Some(v) if !v.is_finite() => {
                return MetricValue::undefined(format!("score for demographic #{i} is non-finite"))
            }
            Some(v) if *v < 0.0 => {
                return MetricValue::undefined(format!("score for demographic #{i} is negative ({v})"))
            }
            Some(v) => values.push(*v),
        }
    }
    // Summing in sorted order makes the result independent of input order.
    values.sort_by(f64::total_cmp);
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return MetricValue::undefined("scores sum to zero");
    }
    // p * n is not always exactly 1 for equal scores, so the uniform case
    // is decided on the scores themselves.
    if values.iter().all(|&v| v == values[0]) {
        return MetricValue::Defined(0.0);
    }
    let n = values.len() as f64;
    let kl = values
        .iter()
        .map(|v| v / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * (p * n).ln())
        .sum::<f64>();
    // Rounding can leave a tiny negative residue when p is uniform.
    MetricValue::Defined(kl.max(0.0))
}
