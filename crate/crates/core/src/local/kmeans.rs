use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{norm, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_K: usize = 6;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Independent k-means++ restarts; the lowest-inertia run is kept.
    pub n_init: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            n_init: 1,
        }
    }
}

/// A k-means clustering of one embedding space. Rows are held in ascending
/// id order, so the result does not depend on the row order of the input.
#[derive(Debug, Clone, Serialize)]
pub struct Clustering {
    pub model_id: String,
    pub k: usize,
    pub seed: u64,
    pub ids: Vec<String>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step of the kept run.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    /// Builds a clustering directly from an assignment (no centroids).
    pub fn from_assignment(model_id: &str, k: usize, ids: Vec<String>, assignment: Vec<usize>) -> Result<Self> {
        if ids.len() != assignment.len() {
            return Err(Error::Shape("ids and assignment differ in length".into()));
        }
        if assignment.iter().any(|&c| c >= k) {
            return Err(Error::invalid("cluster index out of range"));
        }
        let mut pairs: Vec<(String, usize)> = ids.into_iter().zip(assignment).collect();
        pairs.sort();
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(w[0].0.clone()));
        }
        let (ids, assignment) = pairs.into_iter().unzip();
        Ok(Self {
            model_id: model_id.to_string(),
            k,
            seed: 0,
            ids,
            assignment,
            centroids: Vec::new(),
            inertia: 0.0,
            inertia_history: Vec::new(),
            iterations: 0,
            converged: true,
        })
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.ids
            .binary_search_by(|p| p.as_str().cmp(id))
            .ok()
            .map(|i| self.assignment[i])
    }

    pub fn members(&self, cluster: usize) -> BTreeSet<String> {
        self.ids
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &c)| c == cluster)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let nearest: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, centroids)).collect();
    // Summed sequentially for a schedule-independent result.
    let inertia = nearest.iter().map(|n| n.1).sum();
    (nearest.into_iter().map(|n| n.0).collect(), inertia)
}

/// Draws an unchosen point with probability proportional to `d2`, or
/// uniformly when every remaining point coincides with a chosen center.
fn draw(d2: &[f64], chosen: &[bool], rng: &mut rng::Rng) -> usize {
    let total: f64 = d2.iter().zip(chosen).filter(|(_, &c)| !c).map(|(d, _)| d).sum();
    if total > 0.0 {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if chosen[i] || d == 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        pick.expect("positive total has a candidate")
    } else {
        let free: Vec<usize> = (0..d2.len()).filter(|&i| !chosen[i]).collect();
        free[rng.random_range(0..free.len())]
    }
}

/// Greedy k-means++: each new center is the best of `2 + ln k` weighted
/// draws, judged by the summed squared distance it leaves.
fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = draw(&d2, &chosen, rng);
            let next: Vec<f64> = points
                .par_iter()
                .zip(&d2)
                .map(|(p, &d)| d.min(sq_dist(p, &points[cand])))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((cand, potential, next));
            }
        }
        let (pick, _, next) = best.expect("at least one trial");
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        d2 = next;
    }
    centroids
}

/// Recomputes centroids as member means. An empty cluster takes the point
/// farthest from its own centroid (among clusters with more than one member).
fn update(points: &[Vec<f64>], assignment: &mut [usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = points[0].len();
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(assignment.iter()) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums
                .into_iter()
                .zip(&counts)
                .map(|(s, &c)| s.into_iter().map(|x| x / c as f64).collect())
                .collect();
        };
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { vec![0.0; dim] } else { s.iter().map(|x| x / c as f64).collect() })
            .collect();
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            if counts[c] <= 1 {
                continue;
            }
            let d = sq_dist(p, &means[c]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n leaves a cluster with two or more points");
        assignment[i] = empty;
    }
}

struct Run {
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut rng::Rng) -> Run {
    let mut centroids = plus_plus_init(points, k, rng);
    let (mut assignment, mut inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut repaired = assignment.clone();
        centroids = update(points, &mut repaired, &centroids);
        let (next, next_inertia) = assign(points, &centroids);
        history.push(next_inertia);
        let unchanged = next == assignment;
        assignment = next;
        inertia = next_inertia;
        if unchanged {
            converged = true;
            break;
        }
    }
    Run {
        assignment,
        centroids,
        inertia,
        history,
        iterations,
        converged,
    }
}

/// k-means++ seeded from `params.seed`, then Lloyd iterations on
/// L2-normalized rows until the assignment stops changing or `max_iter`
/// iterations have run.
pub fn kmeans(embeddings: &EmbeddingSet, params: &KMeansParams) -> Result<Clustering> {
    let n = embeddings.len();
    if params.k == 0 || params.k > n {
        return Err(Error::invalid(format!("k = {} must lie in 1..={n}", params.k)));
    }
    if params.n_init == 0 {
        return Err(Error::invalid("n_init must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| embeddings.ids()[a].cmp(&embeddings.ids()[b]));
    let mut points = Vec::with_capacity(n);
    for &i in &order {
        let row = embeddings.row(i);
        let len = norm(row);
        if len == 0.0 {
            return Err(Error::ZeroVector(embeddings.ids()[i].clone()));
        }
        points.push(row.iter().map(|&x| x as f64 / len).collect::<Vec<f64>>());
    }
    let ids: Vec<String> = order.iter().map(|&i| embeddings.ids()[i].clone()).collect();

    let mut rng = rng::stream(params.seed, rng::streams::KMEANS);
    let mut best: Option<Run> = None;
    for _ in 0..params.n_init {
        let run = lloyd(&points, params.k, params.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let run = best.expect("n_init >= 1");
    Ok(Clustering {
        model_id: embeddings.model_id().to_string(),
        k: params.k,
        seed: params.seed,
        ids,
        assignment: run.assignment,
        centroids: run.centroids,
        inertia: run.inertia,
        inertia_history: run.history,
        iterations: run.iterations,
        converged: run.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clouds(seed: u64) -> (EmbeddingSet, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let base = if c == 0 { [1.0f32, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            rows.push(base.iter().map(|&b| b + 0.05 * (r.random::<f32>() - 0.5)).collect());
            truth.push(c);
        }
        let ids = (0..60).map(|i| format!("p{i:02}")).collect();
        (EmbeddingSet::from_rows("m", ids, &rows).unwrap(), truth)
    }

    #[test]
    fn separated_clouds_recovered() {
        let (set, truth) = two_clouds(1);
        let c = kmeans(&set, &KMeansParams::new(2, 0)).unwrap();
        let first = c.cluster_of("p00").unwrap();
        for (i, t) in truth.iter().enumerate() {
            let got = c.cluster_of(&format!("p{i:02}")).unwrap();
            assert_eq!(got == first, *t == 0);
        }
        assert!(c.converged);
    }

    #[test]
    fn k_equals_n_is_zero_inertia() {
        let (set, _) = two_clouds(2);
        let c = kmeans(&set, &KMeansParams::new(set.len(), 4)).unwrap();
        assert!(c.inertia.abs() < 1e-20);
        assert!(c.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn inertia_never_increases() {
        let mut r = rng::seeded(9);
        let rows: Vec<Vec<f32>> = (0..200).map(|_| (0..5).map(|_| r.random::<f32>() - 0.5).collect()).collect();
        let ids = (0..200).map(|i| format!("x{i:03}")).collect();
        let set = EmbeddingSet::from_rows("m", ids, &rows).unwrap();
        for seed in 0..5 {
            let c = kmeans(&set, &KMeansParams::new(6, seed)).unwrap();
            for w in c.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", c.inertia_history);
            }
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let (set, _) = two_clouds(3);
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.reverse();
        let rows: Vec<Vec<f32>> = idx.iter().map(|&i| set.row(i).to_vec()).collect();
        let ids = idx.iter().map(|&i| set.ids()[i].clone()).collect();
        let rev = EmbeddingSet::from_rows("m", ids, &rows).unwrap();
        let a = kmeans(&set, &KMeansParams::new(3, 7)).unwrap();
        let b = kmeans(&rev, &KMeansParams::new(3, 7)).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.ids, b.ids);
    }

    #[test]
    fn k_larger_than_rows_errors() {
        let (set, _) = two_clouds(4);
        assert!(kmeans(&set, &KMeansParams::new(61, 0)).is_err());
    }
}
