use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{model_stream, SynthSpec};
use crate::data::EmbeddingSet;
use crate::error::Result;
use crate::rng;

const CH_SPACE: u64 = 0;
const CH_POST: u64 = 1;

/// Pre- and post-adaptation spaces, one per model, over the same sample ids.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub pre: Vec<EmbeddingSet>,
    pub post: Vec<EmbeddingSet>,
    /// Planted concept of each sample; `None` for the background cluster.
    pub concept: Vec<Option<usize>>,
}

fn gaussian(r: &mut rng::Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| r.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Haar-like random orthogonal matrix (rows) by Gram-Schmidt on Gaussian rows.
pub fn random_rotation(dim: usize, r: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while q.len() < dim {
        let mut v = gaussian(r, dim, 1.0);
        for b in &q {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

fn rotate(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn to_set(model: &str, ids: &[String], rows: &[Vec<f64>]) -> Result<EmbeddingSet> {
    let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
    EmbeddingSet::from_rows(model, ids.to_vec(), &rows)
}

/// Planted concept clusters seen through a random rotation per model, with
/// per-model center jitter and sample noise. Post-adaptation rows blend each
/// pre row with the shared concept layout at weight `convergence` (in the
/// model's own frame, since coordinates are only defined up to rotation),
/// then add fresh per-model noise.
pub fn gen_spaces(spec: &SynthSpec) -> Result<Spaces> {
    let dim = spec.dim;
    let per_coord = 1.0 / (dim as f64).sqrt();
    let c = spec.concepts.count;
    let mut r = rng::stream(spec.seed, rng::streams::SPACES);

    // Concept sizes: planted concepts split the non-background samples.
    let planted = spec.samples - spec.concepts.background;
    let mut concept: Vec<Option<usize>> = (0..planted).map(|i| Some(i * c / planted)).collect();
    concept.resize(spec.samples, None);
    concept.shuffle(&mut r);

    // Index c is the background cluster.
    let centers: Vec<Vec<f64>> = (0..=c)
        .map(|_| unit(gaussian(&mut r, dim, 1.0)).into_iter().map(|x| x * spec.concepts.separation).collect())
        .collect();
    let base: Vec<Vec<f64>> = concept
        .iter()
        .map(|k| {
            let noise = gaussian(&mut r, dim, spec.concepts.noise * per_coord);
            centers[k.unwrap_or(c)].iter().zip(noise).map(|(a, b)| a + b).collect()
        })
        .collect();
    let ids = spec.sample_ids();
    let lambda = spec.convergence;
    let mut pre = Vec::with_capacity(spec.models);
    let mut post = Vec::with_capacity(spec.models);
    for (m, model) in spec.model_ids().iter().enumerate() {
        let mut mr = model_stream(spec.seed, m, CH_SPACE);
        let rot = random_rotation(dim, &mut mr);
        let jitter: Vec<Vec<f64>> = (0..=c).map(|_| gaussian(&mut mr, dim, spec.model_jitter * per_coord)).collect();
        // Model coordinates before rotation.
        let local: Vec<Vec<f64>> = base
            .iter()
            .zip(&concept)
            .map(|(v, k)| {
                let noise = gaussian(&mut mr, dim, spec.model_noise * per_coord);
                let j = &jitter[k.unwrap_or(c)];
                v.iter().zip(j).zip(noise).map(|((a, b), n)| a + b + n).collect()
            })
            .collect();
        let pre_rows: Vec<Vec<f64>> = local.iter().map(|x| rotate(&rot, x)).collect();
        // The shared target is the jitter-free concept layout, expressed in
        // the model's own frame.
        let mut pr = model_stream(spec.seed, m, CH_POST);
        let post_rows: Vec<Vec<f64>> = local
            .iter()
            .zip(&base)
            .map(|(x, t)| {
                let noise = gaussian(&mut pr, dim, spec.post_noise * per_coord);
                let blend: Vec<f64> = x
                    .iter()
                    .zip(t)
                    .zip(noise)
                    .map(|((a, b), n)| (1.0 - lambda) * a + lambda * b + n)
                    .collect();
                rotate(&rot, &blend)
            })
            .collect();
        pre.push(to_set(model, &ids, &pre_rows)?);
        post.push(to_set(model, &ids, &post_rows)?);
    }
    Ok(Spaces { pre, post, concept })
}
