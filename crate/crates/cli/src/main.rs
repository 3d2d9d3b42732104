mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Bias audits for embedding models and their downstream task models.
#[derive(Debug, Parser, Serialize)]
#[command(name = "bias-audit", version, args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file supplying any long flag; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report path (stdout when absent); the output directory for `synth generate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also write an SVG plot of the results here.
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Pre-adaptation and downstream bias metrics.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Cluster groups shared across embedding spaces.
    #[command(subcommand)]
    Groups(GroupsCommand),
    /// Correlations between pre-adaptation and downstream bias.
    #[command(subcommand)]
    Transfer(TransferCommand),
    /// Representation convergence before and after adaptation.
    #[command(subcommand)]
    Converge(ConvergeCommand),
    /// Synthetic bundles with planted bias.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditCommand {
    /// Recall@k per demographic and its KL divergence from uniform.
    Recall(RecallArgs),
    /// Mean MaxSkew@k over text prompts.
    Maxskew(MaxSkewArgs),
    /// Score disparity, bias amplification or caption leakage.
    Downstream(DownstreamArgs),
    /// Every applicable metric for every model of a manifest.
    Bundle(BundleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotationArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Attribute schema; inferred from the annotations when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Protected attribute(s) to audit.
    #[arg(long = "attr", required = true, num_args = 1..)]
    pub attrs: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct RecallArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub annotations: AnnotationArgs,
    #[arg(long, default_value_t = bias_audit::retrieval::DEFAULT_RECALL_K)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MaxSkewArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub annotations: AnnotationArgs,
    #[arg(long, default_value_t = bias_audit::retrieval::DEFAULT_SKEW_K)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Vqa,
    Caption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DownMetric {
    Kl,
    Dba,
    Lic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VqaScoring {
    Exact,
    Soft,
}

#[derive(Debug, Args, Serialize)]
pub struct LeakageArgs {
    /// Feature hash width in bits.
    #[arg(long, default_value_t = 18)]
    pub hash_bits: u32,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Keep demographic words in captions instead of masking them.
    #[arg(long)]
    pub no_mask: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DownstreamArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Predictions (VQA lines carry their own ground-truth answers).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth captions, when kept apart from the generated ones.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub annotations: AnnotationArgs,
    /// Metrics to compute; defaults to kl and dba for vqa, lic (and kl with --scores) for captions.
    #[arg(long = "metric", value_enum, num_args = 1..)]
    pub metrics: Vec<DownMetric>,
    /// Precomputed per-sample scores (e.g. CIDEr) for the kl metric.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = bias_audit::downstream::DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, value_enum, default_value_t = VqaScoring::Soft)]
    pub vqa_accuracy: VqaScoring,
    #[command(flatten)]
    #[serde(flatten)]
    pub leakage: LeakageArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BundleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to the manifest's value, then 5.
    #[arg(long)]
    pub recall_k: Option<usize>,
    /// Defaults to the manifest's value, then 1000.
    #[arg(long)]
    pub skew_k: Option<usize>,
    #[arg(long, default_value_t = bias_audit::downstream::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Attributes to audit; all schema attributes when absent.
    #[arg(long = "attr", num_args = 1..)]
    pub attrs: Vec<String>,
    #[arg(long, value_enum, default_value_t = VqaScoring::Soft)]
    pub vqa_accuracy: VqaScoring,
    #[command(flatten)]
    #[serde(flatten)]
    pub leakage: LeakageArgs,
    /// Write the pre-adaptation metric table here.
    #[arg(long)]
    pub pre_table: Option<PathBuf>,
    /// Write the downstream metric table here.
    #[arg(long)]
    pub down_table: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupsCommand {
    /// Cluster each space and match clusters into shared groups.
    Discover(DiscoverArgs),
    /// Bias per group against the global value.
    Audit(GroupAuditArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DiscoverArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long, default_value_t = bias_audit::local::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = bias_audit::local::DEFAULT_MIN_SIZE)]
    pub min_size: usize,
    /// Reference model id; the lexicographically first one when absent.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub n_init: usize,
    #[arg(long, default_value_t = bias_audit::local::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupMetric {
    RecallKl,
    Maxskew,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PMethod {
    Auto,
    TApprox,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Args, Serialize)]
pub struct PValueArgs {
    #[arg(long, value_enum, default_value_t = PMethod::Auto)]
    pub p_method: PMethod,
    #[arg(long, default_value_t = bias_audit::transfer::DEFAULT_MC_DRAWS)]
    pub mc_draws: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GroupAuditArgs {
    #[arg(long)]
    pub groups: PathBuf,
    /// Bundle manifest providing each model's retrieval or MaxSkew files.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub metric: GroupMetric,
    /// Attributes to audit; all schema attributes when absent.
    #[arg(long = "attr", num_args = 1..)]
    pub attrs: Vec<String>,
    /// Cutoff for the metric; defaults to the manifest's value, then the metric default.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub p: PValueArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferCommand {
    /// Spearman correlation for every pre x downstream metric combination.
    Correlate(CorrelateArgs),
    /// Per-model demographic gaps before and after adaptation.
    Gaps(GapsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub pre: PathBuf,
    #[arg(long)]
    pub down: PathBuf,
    /// Extra attribute pairs `PRE:DOWN` to correlate across attributes.
    #[arg(long = "cross-attr", num_args = 1..)]
    pub cross_attrs: Vec<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub p: PValueArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GapsArgs {
    #[arg(long)]
    pub pre: PathBuf,
    #[arg(long)]
    pub down: PathBuf,
    #[arg(long)]
    pub attr: String,
    #[arg(long, default_value = bias_audit::audit::RECALL)]
    pub pre_metric: String,
    #[arg(long, default_value = bias_audit::audit::VQA_ACCURACY)]
    pub down_metric: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergeCommand {
    /// Inter-model similarity of pre and post spaces.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long, required = true, num_args = 2..)]
    pub pre: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 2..)]
    pub post: Vec<PathBuf>,
    /// JSON list of sample ids fixing the pair order; the first pre file's order when absent.
    #[arg(long)]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthCommand {
    /// Write a synthetic bundle and its expected values.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Generator settings; defaults for any field left out.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
