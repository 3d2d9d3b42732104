//! Direct, unoptimized evaluations of each metric's definition. They share no
//! code with the library so that agreement is meaningful.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

/// KL(p || uniform) = sum p ln p + ln n over the nonzero shares.
pub fn kl_uniform(v: &[f64]) -> f64 {
    let total: f64 = v.iter().sum();
    let n = v.len() as f64;
    let mut h = 0.0;
    for &x in v {
        let p = x / total;
        if p > 0.0 {
            h += p * p.ln();
        }
    }
    h + n.ln()
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Sorts every image by cosine to the prompt (ties by id), counts
/// demographics in the first `k` and takes the largest log ratio.
pub fn max_skew(images: &[(String, Vec<f32>, usize)], prompt: &[f32], k: usize, demographics: usize) -> f64 {
    let mut ranked: Vec<(f64, &str, usize)> = images.iter().map(|(id, v, d)| (cos(v, prompt), id.as_str(), *d)).collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    let d = images.len() as f64;
    let mut best = f64::NEG_INFINITY;
    for a in 0..demographics {
        let in_top = ranked[..k].iter().filter(|r| r.2 == a).count() as f64;
        let overall = images.iter().filter(|r| r.2 == a).count() as f64;
        if in_top > 0.0 {
            best = best.max(((in_top / k as f64) / (overall / d)).ln());
        }
    }
    best
}

/// (demographic, ground-truth answer, predicted answer) per question.
pub type DbaRow = (usize, String, String);

/// Averages `y_at * delta_at + (1 - y_at) * (-delta_at)` over every
/// demographic and every ground-truth answer.
pub fn dba(rows: &[DbaRow], demographics: usize) -> f64 {
    let answers: BTreeSet<&str> = rows.iter().map(|r| r.1.as_str()).collect();
    let n = rows.len() as i64;
    let mut sum = 0.0;
    for a in 0..demographics {
        let n_a = rows.iter().filter(|r| r.0 == a).count() as i64;
        for &t in &answers {
            let n_t = rows.iter().filter(|r| r.1 == t).count() as i64;
            let n_at = rows.iter().filter(|r| r.0 == a && r.1 == t).count() as i64;
            let m_at = rows.iter().filter(|r| r.0 == a && r.2 == t).count() as i64;
            // P(a,t) > P(a) P(t), scaled by N^2 to stay in integers.
            let y = n_at * n > n_a * n_t;
            let delta = if n_a == 0 {
                0.0
            } else {
                m_at as f64 / n_a as f64 - n_at as f64 / n_a as f64
            };
            sum += if y { delta } else { -delta };
        }
    }
    sum / (demographics * answers.len()) as f64
}

/// Rank of each value: one plus the number of smaller values plus half the
/// number of other equal values.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Two-sided Student-t p-value through the regularized incomplete beta.
pub fn t_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let t2 = rho * rho * df / (1.0 - rho * rho);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t2))
}

/// Share of all n! reorderings of `y` whose |rho| reaches the observed one.
pub fn permutation_p(x: &[f64], y: &[f64]) -> f64 {
    fn visit(x: &[f64], rest: &mut Vec<f64>, cur: &mut Vec<f64>, observed: f64, hits: &mut u64, total: &mut u64) {
        if rest.is_empty() {
            *total += 1;
            if spearman(x, cur).abs() >= observed - 1e-12 {
                *hits += 1;
            }
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            cur.push(v);
            visit(x, rest, cur, observed, hits, total);
            cur.pop();
            rest.insert(i, v);
        }
    }
    let observed = spearman(x, y).abs();
    let (mut hits, mut total) = (0, 0);
    visit(x, &mut y.to_vec(), &mut Vec::new(), observed, &mut hits, &mut total);
    hits as f64 / total as f64
}

/// Cosine of every sample pair, i < j, straight from the rows.
pub fn similarity_profile(rows: &[Vec<f32>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            out.push(cos(&rows[i], &rows[j]));
        }
    }
    out
}

pub fn cosine64(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa.sqrt() * bb.sqrt())
}

/// Largest set of samples sharing one cluster in every model, by trying
/// every combination of clusters.
pub fn best_combination(assignments: &[Vec<usize>], k: usize) -> usize {
    let mut tally: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let n = assignments[0].len();
    for i in 0..n {
        let key: Vec<usize> = assignments.iter().map(|a| a[i]).collect();
        *tally.entry(key).or_default() += 1;
    }
    let combos = k.pow(assignments.len() as u32);
    let mut best = 0;
    for c in 0..combos {
        let mut key = Vec::with_capacity(assignments.len());
        let mut rest = c;
        for _ in assignments {
            key.push(rest % k);
            rest /= k;
        }
        best = best.max(tally.get(&key).copied().unwrap_or(0));
    }
    best
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    inter as f64 / a.union(b).count() as f64
}
