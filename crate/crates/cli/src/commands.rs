use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use bias_audit::audit::{
    audit_bundle, audit_model, is_data_gap, AuditParams, BundleInputs, ModelAudit, DBA, LIC, SCORE_KL_PREFIX,
    SCORE_PREFIX, VQA_ACCURACY, VQA_KL,
};
use bias_audit::convergence::{
    convergence_report, inter_model_similarity, similarity_profile, Histogram, SimilarityProfile,
};
use bias_audit::data::{
    load_id_list, partition_by_demographic, AnnotationTable, AttributeSchema, DemographicPartition, EmbeddingSet,
    Manifest, ModelFiles, ProtectedAttribute,
};
use bias_audit::downstream::{LeakageConfig, VqaAccuracy};
use bias_audit::local::{
    global_local_correlation, kmeans, match_groups, per_group_bias, BiasTable, Clustering, GroupAssignment,
    KMeansParams,
};
use bias_audit::plot::{heatmap_svg, histogram_svg, histograms_svg, scatter_svg, Heatmap};
use bias_audit::report::{canonical_json, flatten_csv, write_text, BiasReport, ReportFormat};
use bias_audit::retrieval::{
    kl_of_recall, mean_max_skew, recall_at_k, RetrievalCorpus, DEFAULT_RECALL_K, DEFAULT_SKEW_K,
};
use bias_audit::synth::{generate, SynthSpec};
use bias_audit::transfer::{
    correlation_sweep, gap_quadrants, MetricTable, PValueMethod, SweepPlan,
};
use bias_audit::MetricValue;

use crate::*;

/// Correlation threshold drawn on the rho histogram.
const RHO_MARKER: f64 = 0.3;

/// What a command hands back for the report.
struct Output {
    name: &'static str,
    results: Value,
    inputs: Vec<(String, PathBuf)>,
    plot: Option<String>,
    /// Keys merged into the top level of the report document.
    top_level: Option<serde_json::Map<String, Value>>,
    /// Where the report goes when it is not `--out`.
    report_path: Option<PathBuf>,
}

impl Output {
    fn new(name: &'static str, results: &impl Serialize) -> Result<Self> {
        Ok(Self {
            name,
            results: serde_json::to_value(results)?,
            inputs: Vec::new(),
            plot: None,
            top_level: None,
            report_path: None,
        })
    }

    fn input(mut self, role: impl Into<String>, path: &Path) -> Self {
        self.inputs.push((role.into(), path.to_path_buf()));
        self
    }
}

struct Ctx {
    seed: u64,
    want_plot: bool,
}

pub fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        want_plot: cli.plot.is_some(),
    };
    let out = match &cli.command {
        Command::Audit(AuditCommand::Recall(a)) => audit_recall(&ctx, a)?,
        Command::Audit(AuditCommand::Maxskew(a)) => audit_maxskew(&ctx, a)?,
        Command::Audit(AuditCommand::Downstream(a)) => audit_downstream(&ctx, a)?,
        Command::Audit(AuditCommand::Bundle(a)) => audit_bundle_cmd(&ctx, a)?,
        Command::Groups(GroupsCommand::Discover(a)) => groups_discover(&ctx, a)?,
        Command::Groups(GroupsCommand::Audit(a)) => groups_audit(&ctx, a)?,
        Command::Transfer(TransferCommand::Correlate(a)) => transfer_correlate(&ctx, a)?,
        Command::Transfer(TransferCommand::Gaps(a)) => transfer_gaps(&ctx, a)?,
        Command::Converge(ConvergeCommand::Compare(a)) => converge_compare(&ctx, a)?,
        Command::Synth(SynthCommand::Generate(a)) => synth_generate(&ctx, cli, a)?,
    };

    if let Some(path) = &cli.plot {
        let svg = out.plot.as_ref().ok_or_else(|| anyhow!("`{}` has no plot", out.name))?;
        write_text(path, svg).with_context(|| format!("writing plot {}", path.display()))?;
    }

    let mut report = BiasReport::new(out.name, cli, &out.results)?;
    report.digest_inputs(out.inputs.iter().map(|(r, p)| (r.as_str(), p)))?;
    report.timing.elapsed_ms = start.elapsed().as_millis() as u64;
    let format = match cli.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let text = match out.top_level {
        None => report.render(format)?,
        Some(extra) => {
            let Value::Object(mut doc) = serde_json::to_value(&report)? else {
                unreachable!("reports serialize as objects")
            };
            for (k, v) in extra {
                doc.insert(k, v);
            }
            let doc = Value::Object(doc);
            match format {
                ReportFormat::Json => canonical_json(&doc)?,
                ReportFormat::Csv => flatten_csv(&doc)?,
            }
        }
    };
    match out.report_path.as_ref().or(cli.out.as_ref()) {
        Some(path) => write_text(path, &text).with_context(|| format!("writing report {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_annotations(a: &AnnotationArgs) -> Result<(AnnotationTable, Vec<ProtectedAttribute>)> {
    let table = match &a.schema {
        Some(s) => AnnotationTable::load(AttributeSchema::load(s)?, &a.annotations)?,
        None => AnnotationTable::load_inferred(&a.annotations)?,
    };
    let attrs = a
        .attrs
        .iter()
        .map(|n| table.schema().get(n).cloned())
        .collect::<bias_audit::Result<Vec<_>>>()?;
    Ok((table, attrs))
}

fn annotation_inputs(out: Output, a: &AnnotationArgs) -> Output {
    let out = out.input("annotations", &a.annotations);
    match &a.schema {
        Some(s) => out.input("schema", s),
        None => out,
    }
}

fn leakage_config(a: &LeakageArgs) -> LeakageConfig {
    let cfg = LeakageConfig {
        hash_bits: a.hash_bits,
        epochs: a.epochs,
        ..Default::default()
    };
    if a.no_mask {
        cfg.without_masking()
    } else {
        cfg
    }
}

fn vqa_scoring(v: VqaScoring) -> VqaAccuracy {
    match v {
        VqaScoring::Exact => VqaAccuracy::Exact,
        VqaScoring::Soft => VqaAccuracy::Soft,
    }
}

fn p_method(p: &PValueArgs, seed: u64) -> PValueMethod {
    match p.p_method {
        PMethod::Auto => PValueMethod::Auto,
        PMethod::TApprox => PValueMethod::TApprox,
        PMethod::Exact => PValueMethod::Exact,
        PMethod::MonteCarlo => PValueMethod::MonteCarlo {
            draws: p.mc_draws,
            seed,
        },
    }
}

fn model_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

/// One-column heatmap of per-demographic values, one row group per attribute.
fn demographic_heatmap(title: &str, audit: &ModelAudit, attrs: &[ProtectedAttribute]) -> Result<String> {
    let mut h = Heatmap {
        title: title.into(),
        row_labels: Vec::new(),
        col_labels: vec![audit.model.clone()],
        values: Vec::new(),
        row_groups: Vec::new(),
    };
    for (metric, by_attr) in &audit.per_demographic {
        for attr in attrs {
            let Some(values) = by_attr.get(attr.name()) else {
                continue;
            };
            for (d, v) in attr.demographics().iter().zip(values) {
                h.row_labels.push(format!("{}/{metric}/{d}", attr.name()));
                h.values.push(vec![v.value()]);
                h.row_groups.push(attr.name().to_string());
            }
        }
    }
    for (metric, by_attr) in &audit.metrics {
        for attr in attrs {
            if let Some(v) = by_attr.get(attr.name()) {
                h.row_labels.push(format!("{}/{metric}", attr.name()));
                h.values.push(vec![v.value()]);
                h.row_groups.push(format!("{}/{metric}", attr.name()));
            }
        }
    }
    Ok(heatmap_svg(&h)?)
}

fn single_model(
    files: &ModelFiles,
    table: AnnotationTable,
    pairs: Option<&Path>,
    attrs: &[ProtectedAttribute],
    params: &AuditParams,
) -> Result<ModelAudit> {
    let inputs = BundleInputs {
        annotations: table,
        pairs: pairs.map(bias_audit::data::load_pairs).transpose()?,
    };
    Ok(audit_model(files, &inputs, attrs, params)?)
}

fn audit_recall(ctx: &Ctx, a: &RecallArgs) -> Result<Output> {
    let (table, attrs) = load_annotations(&a.annotations)?;
    let files = ModelFiles {
        id: model_id_of(&a.images),
        retrieval_images: Some(a.images.clone()),
        retrieval_texts: Some(a.texts.clone()),
        ..Default::default()
    };
    let params = AuditParams {
        recall_k: a.k,
        seed: ctx.seed,
        ..Default::default()
    };
    let audit = single_model(&files, table, Some(&a.pairs), &attrs, &params)?;
    let plot = ctx
        .want_plot
        .then(|| demographic_heatmap(&format!("recall@{}", a.k), &audit, &attrs))
        .transpose()?;
    let mut out = Output::new("audit recall", &audit)?
        .input("images", &a.images)
        .input("texts", &a.texts)
        .input("pairs", &a.pairs);
    out = annotation_inputs(out, &a.annotations);
    out.plot = plot;
    Ok(out)
}

fn audit_maxskew(ctx: &Ctx, a: &MaxSkewArgs) -> Result<Output> {
    let (table, attrs) = load_annotations(&a.annotations)?;
    let files = ModelFiles {
        id: model_id_of(&a.images),
        skew_images: Some(a.images.clone()),
        skew_prompts: Some(a.prompts.clone()),
        ..Default::default()
    };
    let params = AuditParams {
        skew_k: a.k,
        seed: ctx.seed,
        ..Default::default()
    };
    let audit = single_model(&files, table, None, &attrs, &params)?;
    let plot = if ctx.want_plot {
        // Rows: attributes; columns: prompts.
        let mut h = Heatmap {
            title: format!("MaxSkew@{}", a.k),
            row_labels: Vec::new(),
            col_labels: Vec::new(),
            values: Vec::new(),
            row_groups: Vec::new(),
        };
        for attr in &attrs {
            let detail = audit.details.get(bias_audit::audit::MAXSKEW).and_then(|d| d.get(attr.name()));
            let Some(per_prompt) = detail.and_then(|d| d["per_prompt"].as_array()) else {
                continue;
            };
            let cols: Vec<String> = per_prompt.iter().map(|p| p["prompt"].as_str().unwrap_or("").to_string()).collect();
            if h.col_labels.is_empty() {
                h.col_labels = cols;
            }
            h.row_labels.push(attr.name().to_string());
            h.row_groups.push(attr.name().to_string());
            h.values.push(per_prompt.iter().map(|p| p["max_skew"]["value"].as_f64()).collect());
        }
        Some(heatmap_svg(&h)?)
    } else {
        None
    };
    let mut out = Output::new("audit maxskew", &audit)?
        .input("images", &a.images)
        .input("prompts", &a.prompts);
    out = annotation_inputs(out, &a.annotations);
    out.plot = plot;
    Ok(out)
}

fn audit_downstream(ctx: &Ctx, a: &DownstreamArgs) -> Result<Output> {
    let mut metrics: BTreeSet<DownMetric> = a.metrics.iter().copied().collect();
    if metrics.is_empty() {
        metrics = match a.task {
            Task::Vqa => [DownMetric::Kl, DownMetric::Dba].into(),
            Task::Caption if a.scores.is_some() => [DownMetric::Kl, DownMetric::Lic].into(),
            Task::Caption => [DownMetric::Lic].into(),
        };
    }
    match a.task {
        Task::Vqa if metrics.contains(&DownMetric::Lic) => bail!("lic applies to captioning, not vqa"),
        Task::Caption if metrics.contains(&DownMetric::Dba) => bail!("dba applies to vqa, not captioning"),
        Task::Caption if metrics.contains(&DownMetric::Kl) && a.scores.is_none() => {
            bail!("kl on captions needs per-sample scores (--scores)")
        }
        Task::Vqa if a.gt.is_some() => bail!("vqa predictions carry their own ground truth; drop --gt"),
        _ => {}
    }
    let (table, attrs) = load_annotations(&a.annotations)?;
    let mut files = ModelFiles {
        id: model_id_of(&a.pred),
        ..Default::default()
    };
    match a.task {
        Task::Vqa => files.vqa = Some(a.pred.clone()),
        Task::Caption if metrics.contains(&DownMetric::Lic) => {
            files.captions = Some(a.pred.clone());
            files.captions_gt = a.gt.clone();
        }
        Task::Caption => {}
    }
    if metrics.contains(&DownMetric::Kl) {
        files.scores = a.scores.clone();
    }
    let params = AuditParams {
        top_n: a.top_n,
        vqa_accuracy: vqa_scoring(a.vqa_accuracy),
        leakage: leakage_config(&a.leakage),
        seed: ctx.seed,
        ..Default::default()
    };
    let mut audit = single_model(&files, table, None, &attrs, &params)?;
    let keep = |name: &str| {
        let kl = name == VQA_KL || name == VQA_ACCURACY || name.starts_with(SCORE_KL_PREFIX) || name.starts_with(SCORE_PREFIX);
        (kl && metrics.contains(&DownMetric::Kl))
            || (name == DBA && metrics.contains(&DownMetric::Dba))
            || (name == LIC && metrics.contains(&DownMetric::Lic))
    };
    audit.metrics.retain(|k, _| keep(k));
    audit.per_demographic.retain(|k, _| keep(k));
    audit.details.retain(|k, _| keep(k));
    let plot = ctx
        .want_plot
        .then(|| demographic_heatmap("downstream bias", &audit, &attrs))
        .transpose()?;
    let mut out = Output::new("audit downstream", &audit)?.input("pred", &a.pred);
    if let Some(gt) = &a.gt {
        out = out.input("gt", gt);
    }
    if let Some(s) = &a.scores {
        out = out.input("scores", s);
    }
    out = annotation_inputs(out, &a.annotations);
    out.plot = plot;
    Ok(out)
}

fn manifest_inputs(mut out: Output, path: &Path, m: &Manifest) -> Result<Output> {
    out = out.input("manifest", path).input("schema", &m.schema).input("annotations", &m.annotations);
    if let Some(p) = &m.pairs {
        out = out.input("pairs", p);
    }
    for files in &m.models {
        let Value::Object(fields) = serde_json::to_value(files)? else {
            continue;
        };
        for (field, v) in fields {
            if let (true, Some(p)) = (field != "id", v.as_str()) {
                out = out.input(format!("{}:{field}", files.id), Path::new(p));
            }
        }
    }
    Ok(out)
}

fn bundle_heatmap(audit: &bias_audit::audit::BundleAudit) -> Result<String> {
    let models: Vec<String> = audit.models.iter().map(|m| m.model.clone()).collect();
    let mut h = Heatmap {
        title: "bias per model".into(),
        row_labels: Vec::new(),
        col_labels: models.clone(),
        values: Vec::new(),
        row_groups: Vec::new(),
    };
    for t in [&audit.pre, &audit.down] {
        for (metric, by_attr) in &t.metrics {
            for (attr, by_model) in by_attr {
                h.row_labels.push(format!("{metric}/{attr}"));
                h.row_groups.push(attr.clone());
                h.values.push(models.iter().map(|m| by_model.get(m).copied().flatten()).collect());
            }
        }
    }
    Ok(heatmap_svg(&h)?)
}

fn audit_bundle_cmd(ctx: &Ctx, a: &BundleArgs) -> Result<Output> {
    let manifest = Manifest::load(&a.manifest)?;
    let params = AuditParams {
        recall_k: a.recall_k.or(manifest.recall_k).unwrap_or(DEFAULT_RECALL_K),
        skew_k: a.skew_k.or(manifest.skew_k).unwrap_or(DEFAULT_SKEW_K),
        top_n: a.top_n,
        vqa_accuracy: vqa_scoring(a.vqa_accuracy),
        leakage: leakage_config(&a.leakage),
        seed: ctx.seed,
        attributes: a.attrs.clone(),
    };
    let audit = audit_bundle(&manifest, &params)?;
    for (path, table) in [(&a.pre_table, &audit.pre), (&a.down_table, &audit.down)] {
        if let Some(p) = path {
            write_text(p, &canonical_json(table)?).with_context(|| format!("writing table {}", p.display()))?;
        }
    }
    let plot = ctx.want_plot.then(|| bundle_heatmap(&audit)).transpose()?;
    let results = json!({"effective": params, "audit": audit});
    let mut out = manifest_inputs(Output::new("audit bundle", &results)?, &a.manifest, &manifest)?;
    out.plot = plot;
    Ok(out)
}

#[derive(Serialize)]
struct ClusteringSummary<'a> {
    model: &'a str,
    k: usize,
    sizes: Vec<usize>,
    inertia: f64,
    iterations: usize,
    converged: bool,
}

fn groups_discover(ctx: &Ctx, a: &DiscoverArgs) -> Result<Output> {
    let sets: Vec<EmbeddingSet> = a
        .embeddings
        .iter()
        .map(|p| EmbeddingSet::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;
    let params = KMeansParams {
        k: a.k,
        seed: ctx.seed,
        max_iter: a.max_iter,
        n_init: a.n_init,
    };
    let clusterings: Vec<Clustering> = sets
        .par_iter()
        .map(|s| kmeans(s, &params))
        .collect::<bias_audit::Result<_>>()?;
    let groups = match_groups(&clusterings, a.min_size, a.reference.as_deref())?;
    let summaries: Vec<ClusteringSummary> = clusterings
        .iter()
        .map(|c| ClusteringSummary {
            model: &c.model_id,
            k: c.k,
            sizes: c.sizes(),
            inertia: c.inertia,
            iterations: c.iterations,
            converged: c.converged,
        })
        .collect();
    let plot = if ctx.want_plot {
        let h = Heatmap {
            title: "cluster sizes".into(),
            row_labels: summaries.iter().map(|s| s.model.to_string()).collect(),
            col_labels: (0..a.k).map(|c| c.to_string()).collect(),
            values: summaries.iter().map(|s| s.sizes.iter().map(|&n| Some(n as f64)).collect()).collect(),
            row_groups: summaries.iter().map(|s| s.model.to_string()).collect(),
        };
        Some(heatmap_svg(&h)?)
    } else {
        None
    };
    let mut out = Output::new("groups discover", &json!({ "clusterings": summaries }))?;
    for (p, s) in a.embeddings.iter().zip(&sets) {
        out = out.input(s.model_id(), p);
    }
    // The written file is both a report and a groups file.
    let Value::Object(top) = serde_json::to_value(&groups)? else {
        unreachable!("group assignments serialize as objects")
    };
    out.top_level = Some(top);
    out.plot = plot;
    Ok(out)
}

/// Per-model closure state for a group audit.
enum GroupSource {
    Recall(RetrievalCorpus, DemographicPartition),
    Skew(EmbeddingSet, EmbeddingSet, DemographicPartition),
}

fn group_metric_value(src: &GroupSource, ids: &BTreeSet<String>, k: usize) -> MetricValue {
    let result = match src {
        GroupSource::Recall(corpus, part) => recall_at_k(corpus, &part.restrict(ids), k).map(|r| kl_of_recall(&r)),
        GroupSource::Skew(images, prompts, part) => images
            .subset(ids)
            .and_then(|sub| mean_max_skew(&sub, prompts, &part.restrict(ids), k))
            .map(|s| s.mean),
    };
    match result {
        Ok(v) => v,
        Err(e) if is_data_gap(&e) => MetricValue::undefined(e.to_string()),
        Err(e) => MetricValue::undefined(format!("evaluation failed: {e}")),
    }
}

fn groups_audit(ctx: &Ctx, a: &GroupAuditArgs) -> Result<Output> {
    let groups = GroupAssignment::load(&a.groups)?;
    let manifest = Manifest::load(&a.manifest)?;
    let inputs = BundleInputs::load(&manifest)?;
    let schema = inputs.annotations.schema();
    let attrs: Vec<ProtectedAttribute> = if a.attrs.is_empty() {
        schema.attributes.clone()
    } else {
        a.attrs.iter().map(|n| schema.get(n).cloned()).collect::<bias_audit::Result<_>>()?
    };
    let (metric_name, k) = match a.metric {
        GroupMetric::RecallKl => ("recall-kl", a.k.or(manifest.recall_k).unwrap_or(DEFAULT_RECALL_K)),
        GroupMetric::Maxskew => ("maxskew", a.k.or(manifest.skew_k).unwrap_or(DEFAULT_SKEW_K)),
    };
    let models: Vec<String> = manifest.models.iter().map(|m| m.id.clone()).collect();
    let method = p_method(&a.p, ctx.seed);

    // Embeddings are loaded once per model; partitions once per attribute.
    let mut loaded: Vec<(EmbeddingSet, Option<EmbeddingSet>)> = Vec::new();
    for m in &manifest.models {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| anyhow!("model `{}` has no {what} file in the manifest", m.id))
        };
        loaded.push(match a.metric {
            GroupMetric::RecallKl => (
                EmbeddingSet::load(need(&m.retrieval_images, "retrieval_images")?)?,
                Some(EmbeddingSet::load(need(&m.retrieval_texts, "retrieval_texts")?)?),
            ),
            GroupMetric::Maxskew => (
                EmbeddingSet::load(need(&m.skew_images, "skew_images")?)?,
                Some(EmbeddingSet::load(need(&m.skew_prompts, "skew_prompts")?)?),
            ),
        });
    }
    let universe: BTreeSet<String> = loaded
        .first()
        .map(|(images, _)| images.ids().iter().cloned().collect())
        .unwrap_or_default();

    let mut tables: Vec<BiasTable> = Vec::new();
    for attr in &attrs {
        let mut sources: BTreeMap<&str, GroupSource> = BTreeMap::new();
        for (m, (images, other)) in manifest.models.iter().zip(&loaded) {
            let part = partition_by_demographic(&inputs.annotations, attr, images.ids().iter().map(String::as_str))?;
            let other = other.clone().expect("loaded above");
            let src = match a.metric {
                GroupMetric::RecallKl => {
                    let pairs = inputs.pairs.clone().ok_or_else(|| anyhow!("recall-kl needs a pairs file"))?;
                    GroupSource::Recall(RetrievalCorpus::new(images.clone(), other, pairs)?, part)
                }
                GroupMetric::Maxskew => GroupSource::Skew(images.clone(), other, part),
            };
            sources.insert(m.id.as_str(), src);
        }
        tables.push(per_group_bias(metric_name, attr.name(), &groups, &models, Some(&universe), |model, ids| {
            group_metric_value(&sources[model], ids, k)
        }));
    }

    let correlations: Vec<_> = tables.iter().map(|t| global_local_correlation(t, &method)).collect();
    let pairs: Vec<_> = tables.iter().zip(correlations.iter().cloned()).collect();
    let grid = bias_audit::report::CorrelationGrid::new(&pairs)?;
    let plot = if ctx.want_plot {
        let mut h = Heatmap {
            title: format!("{metric_name} per group"),
            row_labels: Vec::new(),
            col_labels: models.clone(),
            values: Vec::new(),
            row_groups: Vec::new(),
        };
        for t in &tables {
            for r in &t.rows {
                h.row_labels.push(format!("{}/{}", t.attribute, r.view));
                h.row_groups.push(t.attribute.clone());
                h.values.push(r.values.iter().map(MetricValue::value).collect());
            }
        }
        Some(heatmap_svg(&h)?)
    } else {
        None
    };
    let corr_json: Vec<Value> = tables
        .iter()
        .zip(&correlations)
        .map(|(t, c)| {
            json!({
                "metric": t.metric,
                "attribute": t.attribute,
                "views": c.iter().map(|(v, o)| json!({"view": v, "result": o})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let results = json!({
        "k": k,
        "tables": tables,
        "correlations": corr_json,
        "grid": grid,
        "grid_text": grid.render_text(),
    });
    let mut out = manifest_inputs(Output::new("groups audit", &results)?.input("groups", &a.groups), &a.manifest, &manifest)?;
    out.plot = plot;
    Ok(out)
}

fn transfer_correlate(ctx: &Ctx, a: &CorrelateArgs) -> Result<Output> {
    let pre = MetricTable::load(&a.pre)?;
    let down = MetricTable::load(&a.down)?;
    let cross_attributes = a
        .cross_attrs
        .iter()
        .map(|s| {
            s.split_once(':')
                .map(|(p, d)| (p.to_string(), d.to_string()))
                .ok_or_else(|| anyhow!("--cross-attr expects PRE:DOWN, got `{s}`"))
        })
        .collect::<Result<_>>()?;
    let plan = SweepPlan {
        cross_attributes,
        combinations: None,
        method: p_method(&a.p, ctx.seed),
    };
    let sweep = correlation_sweep(&pre, &down, &plan);
    let plot = if ctx.want_plot {
        let rhos: Vec<f64> = sweep.results.iter().map(|r| r.result.rho).collect();
        Some(histogram_svg("Spearman rho per combination", &Histogram::uniform(&rhos, -1.0, 1.0, 20), Some(RHO_MARKER))?)
    } else {
        None
    };
    let mut out = Output::new("transfer correlate", &sweep)?.input("pre", &a.pre).input("down", &a.down);
    out.plot = plot;
    Ok(out)
}

fn transfer_gaps(ctx: &Ctx, a: &GapsArgs) -> Result<Output> {
    let pre = MetricTable::load(&a.pre)?;
    let down = MetricTable::load(&a.down)?;
    let lookup = |t: &MetricTable, metric: &str, side: &str| {
        t.per_demographic
            .get(metric)
            .and_then(|m| m.get(&a.attr))
            .cloned()
            .ok_or_else(|| anyhow!("{side} table has no per-demographic `{metric}` values for `{}`", a.attr))
    };
    let gaps = gap_quadrants(&lookup(&pre, &a.pre_metric, "pre")?, &lookup(&down, &a.down_metric, "down")?)?;
    let plot = ctx
        .want_plot
        .then(|| scatter_svg(&format!("{} vs {} ({})", a.pre_metric, a.down_metric, a.attr), &gaps))
        .transpose()?;
    let mut out = Output::new("transfer gaps", &gaps)?.input("pre", &a.pre).input("down", &a.down);
    out.plot = plot;
    Ok(out)
}

fn profiles(paths: &[PathBuf], ids: &[String]) -> Result<Vec<SimilarityProfile>> {
    paths
        .par_iter()
        .map(|p| {
            let set = EmbeddingSet::load(p).with_context(|| format!("loading {}", p.display()))?;
            Ok(similarity_profile(&set, ids)?)
        })
        .collect()
}

fn converge_compare(ctx: &Ctx, a: &CompareArgs) -> Result<Output> {
    let ids = match &a.ids {
        Some(p) => load_id_list(p)?,
        None => EmbeddingSet::load(&a.pre[0])?.ids().to_vec(),
    };
    let pre = inter_model_similarity(&profiles(&a.pre, &ids)?)?;
    let post = inter_model_similarity(&profiles(&a.post, &ids)?)?;
    let report = convergence_report(&pre, &post);
    let plot = ctx
        .want_plot
        .then(|| histograms_svg("inter-model similarity", &[("pre", &pre.histogram), ("post", &post.histogram)], None))
        .transpose()?;
    let mut out = Output::new("converge compare", &json!({"pre": pre, "post": post, "report": report}))?;
    for p in &a.pre {
        out = out.input("pre", p);
    }
    for p in &a.post {
        out = out.input("post", p);
    }
    if let Some(p) = &a.ids {
        out = out.input("ids", p);
    }
    out.plot = plot;
    Ok(out)
}

type Column = (&'static str, fn(&bias_audit::synth::ExpectedModel) -> f64);

fn synth_generate(ctx: &Ctx, cli: &Cli, a: &GenerateArgs) -> Result<Output> {
    let dir = cli.out.as_ref().ok_or_else(|| anyhow!("synth generate needs --out DIR"))?;
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let bundle = generate(&spec)?;
    let manifest = bundle.write(dir)?;
    let plot = if ctx.want_plot {
        let models: Vec<&String> = bundle.expected.models.keys().collect();
        let rows: [Column; 5] = [
            ("recall-kl", |m| m.recall_kl),
            ("maxskew", |m| m.maxskew),
            ("dba", |m| m.dba),
            ("vqa-kl", |m| m.vqa_kl),
            ("score-kl", |m| m.score_kl),
        ];
        let h = Heatmap {
            title: "planted bias".into(),
            row_labels: rows.iter().map(|(n, _)| n.to_string()).collect(),
            col_labels: models.iter().map(|m| m.to_string()).collect(),
            values: rows
                .iter()
                .map(|(_, f)| models.iter().map(|m| Some(f(&bundle.expected.models[*m]))).collect())
                .collect(),
            row_groups: rows.iter().map(|(n, _)| n.to_string()).collect(),
        };
        Some(heatmap_svg(&h)?)
    } else {
        None
    };
    let results = json!({
        "spec": spec,
        "manifest": manifest.file_name().map(|f| f.to_string_lossy().into_owned()),
        "expected": bundle.expected,
    });
    let mut out = Output::new("synth generate", &results)?;
    if let Some(p) = &a.spec {
        out = out.input("spec", p);
    }
    let ext = match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    out.report_path = Some(dir.join(format!("report.{ext}")));
    out.plot = plot;
    Ok(out)
}
