use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{closed_form_kl, model_stream, ExpectedModel, Levels, Spaces, SynthSpec, SCORE_METRIC};
use crate::data::{CaptionEntry, CaptionOrigin, EmbeddingSet, ScoredEntry, VqaEntry};
use crate::error::Result;
use crate::rng;

const CH_RETRIEVAL: u64 = 2;
const CH_SKEW: u64 = 3;
const CH_VQA: u64 = 4;
const CH_CAPTIONS: u64 = 5;
const CH_SCORES: u64 = 6;

/// Open-ended answers; the first is the one predictions drift towards for
/// the first demographic.
pub const ANSWERS: &[&str] = &[
    "tennis", "kitchen", "pizza", "skateboard", "umbrella", "horse", "surfing", "bus", "frisbee", "laptop", "giraffe",
    "train",
];
/// Share of the first demographic whose true answer is the stereotyped one;
/// every other demographic uses `OTHER_SHARE`.
const STEREOTYPE_SHARE: f64 = 0.3;
const OTHER_SHARE: f64 = 0.05;
/// Annotator answers per question: the true answer `TRUTH_VOTES` times and
/// the stereotyped answer for the rest, so predicting either scores fully.
const TRUTH_VOTES: usize = 6;
const VOTES: usize = 10;

const VERBS: &[&str] = &["holding", "riding", "watching", "carrying", "using", "near", "beside", "behind"];
const NOUNS: &[&str] = &[
    "bicycle", "table", "dog", "cat", "kite", "bench", "car", "boat", "phone", "book", "clock", "ball", "cake", "chair",
    "window", "door", "tree", "street", "field", "beach", "train", "bag", "bottle", "cup", "fence", "road", "wall",
    "sign", "lamp", "box",
];
/// Demographic-revealing tokens that are not on the default mask list.
const LEAK_TOKENS: &[&str] = &["azure", "crimson", "amber", "violet", "olive", "coral", "ivory", "indigo"];

pub(crate) fn text_id(image: &str) -> String {
    format!("txt_{image}")
}

/// Files and expectations for one model.
#[derive(Debug, Clone)]
pub struct ModelTasks {
    pub model_id: String,
    /// One caption embedding per image: the image row itself for a hit, its
    /// negation for a miss.
    pub texts: EmbeddingSet,
    pub skew_images: EmbeddingSet,
    pub prompts: EmbeddingSet,
    pub vqa: Vec<VqaEntry>,
    pub captions: Vec<CaptionEntry>,
    pub scores: Vec<ScoredEntry>,
    pub expected: ExpectedModel,
}

#[derive(Debug, Clone)]
pub struct Predictions {
    pub models: Vec<ModelTasks>,
}

/// Members of each demographic, by sample index.
fn members(demo: &[usize], groups: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); groups];
    for (i, &a) in demo.iter().enumerate() {
        out[a].push(i);
    }
    out
}

fn count(n: usize, rate: f64) -> usize {
    ((n as f64 * rate).round() as usize).min(n)
}

fn caption(r: &mut rng::Rng, leak: Option<&str>) -> String {
    let verb = VERBS.choose(r).expect("non-empty");
    let a = NOUNS.choose(r).expect("non-empty");
    let b = NOUNS.choose(r).expect("non-empty");
    match leak {
        Some(t) => format!("a person in {t} {verb} a {a} by the {b}"),
        None => format!("a person {verb} a {a} by the {b}"),
    }
}

/// Top-k composition per demographic: the first demographic takes its
/// corpus share plus `strength` of the remaining room, the rest is split
/// over the others by largest remainder.
fn skew_quota(sizes: &[usize], k: usize, strength: f64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let rest = n - sizes[0];
    let p0 = sizes[0] as f64 / n as f64;
    let want = (k as f64 * (p0 + strength * (1.0 - p0))).round() as usize;
    let f0 = want.clamp(k.saturating_sub(rest), sizes[0].min(k));
    let left = k - f0;
    let mut quota = vec![f0];
    let mut fracs = Vec::new();
    for (a, &s) in sizes.iter().enumerate().skip(1) {
        let exact = left as f64 * s as f64 / rest.max(1) as f64;
        quota.push(exact.floor() as usize);
        fracs.push((exact - exact.floor(), a));
    }
    fracs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut missing = left - quota[1..].iter().sum::<usize>();
    for (_, a) in fracs.into_iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[a] < sizes[a] {
            quota[a] += 1;
            missing -= 1;
        }
    }
    quota
}

/// Truth answers for the open-ended question, shared by all models.
fn open_truths(spec: &SynthSpec, groups: &[Vec<usize>], r: &mut rng::Rng) -> Vec<usize> {
    let mut truth = vec![0; spec.samples];
    for (a, m) in groups.iter().enumerate() {
        let mut m = m.clone();
        m.shuffle(r);
        let share = if a == 0 { STEREOTYPE_SHARE } else { OTHER_SHARE };
        let s = count(m.len(), share);
        for (j, &i) in m.iter().enumerate() {
            truth[i] = if j < s { 0 } else { 1 + (j - s) % (ANSWERS.len() - 1) };
        }
    }
    truth
}

pub fn gen_predictions(spec: &SynthSpec, spaces: &Spaces, demo: &[usize], levels: &Levels) -> Result<Predictions> {
    let ids = spec.sample_ids();
    let a_count = spec.demographics.len();
    let last = a_count - 1;
    let groups = members(demo, a_count);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n_total = spec.samples;

    // Dataset-level ground truth shared by all models.
    let mut vr = rng::stream(spec.seed, rng::streams::VQA);
    let truth = open_truths(spec, &groups, &mut vr);
    let yes: Vec<bool> = (0..n_total).map(|_| vr.random::<bool>()).collect();
    let mut joint = vec![vec![0usize; ANSWERS.len()]; a_count];
    for (i, &t) in truth.iter().enumerate() {
        joint[demo[i]][t] += 1;
    }
    let totals: Vec<usize> = (0..ANSWERS.len()).map(|t| joint.iter().map(|row| row[t]).sum()).collect();
    let vocabulary = totals.iter().filter(|&&c| c > 0).count();
    // First-demographic samples whose true answer is not positively tied to it.
    let eligible: Vec<usize> = groups[0]
        .iter()
        .copied()
        .filter(|&i| {
            let t = truth[i];
            t != 0 && joint[0][t] * n_total <= sizes[0] * totals[t]
        })
        .collect();

    let mut cr = rng::stream(spec.seed, rng::streams::CAPTIONS);
    let gt_captions: Vec<String> = (0..n_total)
        .map(|i| {
            let leak = cr.random::<f64>() < spec.caption_leak.gt;
            caption(&mut cr, leak.then(|| LEAK_TOKENS[demo[i] % LEAK_TOKENS.len()]))
        })
        .collect();

    let p = spec.skew_prompts;
    let skew_dim = p + 1;
    let prompt_ids: Vec<String> = (0..p).map(|j| format!("prompt{j:02}")).collect();
    let prompt_rows: Vec<Vec<f32>> = (0..p)
        .map(|j| (0..skew_dim).map(|d| if d == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut models = Vec::with_capacity(spec.models);
    for (m, model) in spec.model_ids().into_iter().enumerate() {
        // Retrieval: exact miss counts per demographic.
        let mut rr = model_stream(spec.seed, m, CH_RETRIEVAL);
        let mut miss = vec![false; n_total];
        let mut recall = Vec::with_capacity(a_count);
        for (a, g) in groups.iter().enumerate() {
            let rate = if a == last { spec.base_miss + spec.recall_gap * levels.recall[m] } else { spec.base_miss };
            let mut g = g.clone();
            g.shuffle(&mut rr);
            let k = count(g.len(), rate);
            g[..k].iter().for_each(|&i| miss[i] = true);
            recall.push((g.len() - k) as f64 / g.len() as f64);
        }
        let pre = &spaces.pre[m];
        let text_rows: Vec<Vec<f32>> = (0..n_total)
            .map(|i| {
                let row = pre.row(i);
                if miss[i] {
                    row.iter().map(|v| -v).collect()
                } else {
                    row.to_vec()
                }
            })
            .collect();
        let texts = EmbeddingSet::from_rows(model.clone(), pre.ids().iter().map(|id| text_id(id)).collect(), &text_rows)?;

        // MaxSkew: prompt j scores image i by coordinate j; top-k members sit
        // well above every other image, and all rows share one norm.
        let mut sr = model_stream(spec.seed, m, CH_SKEW);
        let quota = skew_quota(&sizes, spec.skew_k, spec.skew_strength * levels.skew[m]);
        let mut coords = vec![vec![0.0f64; skew_dim]; n_total];
        for j in 0..p {
            let mut top = vec![false; n_total];
            for (g, &q) in groups.iter().zip(&quota) {
                for &i in g.choose_multiple(&mut sr, q) {
                    top[i] = true;
                }
            }
            for (i, c) in coords.iter_mut().enumerate() {
                c[j] = if top[i] { 1.0 } else { 0.0 } + 0.25 * sr.random::<f64>();
            }
        }
        let cap = p as f64 * 1.25f64.powi(2) + 1.0;
        let skew_rows: Vec<Vec<f32>> = coords
            .into_iter()
            .map(|mut c| {
                let used: f64 = c.iter().map(|x| x * x).sum();
                c[p] = (cap - used).sqrt();
                c.into_iter().map(|x| x as f32).collect()
            })
            .collect();
        let skew_images = EmbeddingSet::from_rows(model.clone(), ids.clone(), &skew_rows)?;
        let prompts = EmbeddingSet::from_rows(model.clone(), prompt_ids.clone(), &prompt_rows)?;
        let k = spec.skew_k as f64;
        let maxskew = quota
            .iter()
            .zip(&sizes)
            .filter(|(&q, _)| q > 0)
            .map(|(&q, &s)| ((q as f64 / k) / (s as f64 / n_total as f64)).ln())
            .fold(f64::NEG_INFINITY, f64::max);

        // VQA: switch eligible answers to the stereotyped one; flip yes/no
        // answers of the last demographic.
        let mut qr = model_stream(spec.seed, m, CH_VQA);
        let mut switch = eligible.clone();
        switch.shuffle(&mut qr);
        switch.truncate(count(eligible.len(), spec.amplification * levels.amplification[m]));
        let mut switched = vec![false; n_total];
        switch.iter().for_each(|&i| switched[i] = true);
        let mut wrong_pool = groups[last].clone();
        wrong_pool.shuffle(&mut qr);
        wrong_pool.truncate(count(sizes[last], spec.accuracy_gap * levels.accuracy[m]));
        let mut wrong = vec![false; n_total];
        wrong_pool.iter().for_each(|&i| wrong[i] = true);
        let mut vqa = Vec::with_capacity(2 * n_total);
        for (i, id) in ids.iter().enumerate() {
            let t = ANSWERS[truth[i]];
            let gt = if truth[i] == 0 {
                vec![t.to_string(); VOTES]
            } else {
                let mut g = vec![t.to_string(); TRUTH_VOTES];
                g.extend(std::iter::repeat_n(ANSWERS[0].to_string(), VOTES - TRUTH_VOTES));
                g
            };
            vqa.push(VqaEntry {
                id: id.clone(),
                qid: "q0".into(),
                question: "what is happening in the picture?".into(),
                pred: if switched[i] { ANSWERS[0] } else { t }.into(),
                gt,
            });
            let yn = if yes[i] { "yes" } else { "no" };
            let flipped = if yes[i] { "no" } else { "yes" };
            vqa.push(VqaEntry {
                id: id.clone(),
                qid: "q1".into(),
                question: "is the photo taken outdoors?".into(),
                pred: if wrong[i] { flipped } else { yn }.into(),
                gt: vec![yn.to_string(); VOTES],
            });
        }
        let dba = 2.0 * switch.len() as f64 / (sizes[0] as f64 * a_count as f64 * vocabulary as f64);
        let vqa_accuracy: Vec<f64> = (0..a_count)
            .map(|a| {
                let w = if a == last { wrong_pool.len() } else { 0 };
                (2 * sizes[a] - w) as f64 / (2 * sizes[a]) as f64
            })
            .collect();

        // Captions: ground truth shared, generated ones leak at the model rate.
        let mut kr = model_stream(spec.seed, m, CH_CAPTIONS);
        let leak = spec.caption_leak.gt + (spec.caption_leak.pred - spec.caption_leak.gt) * levels.leak[m];
        let mut captions = Vec::with_capacity(2 * n_total);
        for (i, id) in ids.iter().enumerate() {
            captions.push(CaptionEntry {
                id: id.clone(),
                caption: gt_captions[i].clone(),
                origin: CaptionOrigin::GroundTruth,
            });
            let leaks = kr.random::<f64>() < leak;
            captions.push(CaptionEntry {
                id: id.clone(),
                caption: caption(&mut kr, leaks.then(|| LEAK_TOKENS[demo[i] % LEAK_TOKENS.len()])),
                origin: CaptionOrigin::Generated,
            });
        }
        let lic_sign = match spec.caption_leak.pred.partial_cmp(&spec.caption_leak.gt) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        };

        // Scores: the last demographic's mean drops with the level.
        let mut xr = model_stream(spec.seed, m, CH_SCORES);
        let mut by_demo: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let scores: Vec<ScoredEntry> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let drop = if demo[i] == last { spec.score_gap * levels.score[m] } else { 0.0 };
                let value = 0.8 - drop + 0.1 * (xr.random::<f64>() - 0.5);
                by_demo.entry(demo[i]).or_default().push(value);
                ScoredEntry {
                    id: id.clone(),
                    metric: SCORE_METRIC.into(),
                    value,
                }
            })
            .collect();
        let means: Vec<f64> = by_demo.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();

        models.push(ModelTasks {
            model_id: model,
            texts,
            skew_images,
            prompts,
            vqa,
            captions,
            scores,
            expected: ExpectedModel {
                recall_kl: closed_form_kl(&recall),
                recall,
                maxskew,
                dba,
                vqa_kl: closed_form_kl(&vqa_accuracy),
                vqa_accuracy,
                score_kl: closed_form_kl(&means),
                lic_sign,
            },
        });
    }
    Ok(Predictions { models })
}
