use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdvet::agreement::{AlphaMetric, KappaWeights};
use crowdvet::rng::DEFAULT_SEED;
use crowdvet::timing::ReadingRule;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "crowdvet", version, about = "Annotator recruitment and annotation-quality analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Grade qualification submissions into a worker registry
    Qualify(QualifyArgs),
    /// Track endurance completion and fit the survival curve
    Endurance(EnduranceArgs),
    /// Pairwise kappa, Krippendorff's alpha and Spearman correlations
    Agreement(AgreementArgs),
    /// Fit annotator competence and filter by threshold
    Mace(MaceArgs),
    /// Per-HIT timelines, rusher flags and the time-and-count filter
    Timing(TimingArgs),
    /// Resampling statistics
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Generate a synthetic population or pipeline
    Simulate(SimulateArgs),
    /// Score summary pairs with an LLM judge
    Judge(JudgeArgs),
    /// Pipeline cost breakdown
    Cost(CostArgs),
    /// Run the full pipeline and bundle every analysis into one document
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
pub enum StatsCommand {
    /// Bootstrap mean and standard deviation of a pass rate
    Bootstrap(BootstrapArgs),
    /// Permutation test between two rounds
    Permutation(PermutationArgs),
    /// Collapse each item's ratings into median pseudo-raters
    MedianGrouping(MedianGroupingArgs),
    /// Per-round bootstrap summaries and pairwise permutation tests
    Stability(StabilityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Serialize)]
pub struct OutArgs {
    /// Output file; stdout when omitted
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args, Debug, Serialize)]
pub struct MatrixArgs {
    /// Batch-results CSV
    #[arg(long)]
    pub records: Option<PathBuf>,

    /// Task definitions JSON
    #[arg(long)]
    pub tasks: Option<PathBuf>,

    /// Rating matrix CSV (hit_id,question_id,<raters>) instead of records
    #[arg(long, conflicts_with_all = ["records", "tasks"])]
    pub matrix: Option<PathBuf>,

    /// Scale of a matrix CSV, as kind:min:max
    #[arg(long)]
    pub scale: Option<String>,

    #[arg(long, value_delimiter = ',')]
    pub hits: Vec<String>,

    #[arg(long, value_delimiter = ',')]
    pub questions: Vec<String>,

    #[arg(long, value_delimiter = ',')]
    pub workers: Vec<String>,

    #[arg(long, value_delimiter = ',')]
    pub exclude_workers: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct QualifyArgs {
    #[arg(long)]
    pub records: PathBuf,

    /// Answer key JSON
    #[arg(long)]
    pub key: PathBuf,

    /// Pipeline configuration JSON
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Worker metadata JSON for the basic qualification screen
    #[arg(long)]
    pub metadata: Option<PathBuf>,

    /// Also write the stage table as CSV
    #[arg(long)]
    #[serde(skip)]
    pub stages: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct EnduranceArgs {
    /// Registry written by `qualify`
    #[arg(long)]
    pub registry: PathBuf,

    /// Endurance batch-results CSV
    #[arg(long)]
    pub records: PathBuf,

    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Workers still working, censored in the survival curve
    #[arg(long, value_delimiter = ',')]
    pub active: Vec<String>,

    #[arg(long)]
    pub required_hits: Option<usize>,

    /// Also write the survival curve as CSV
    #[arg(long)]
    #[serde(skip)]
    pub survival: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub input: MatrixArgs,

    #[arg(long, default_value = "interval")]
    pub metric: AlphaMetric,

    #[arg(long, default_value = "unweighted")]
    pub weights: KappaWeights,

    /// Include pairwise Spearman correlations
    #[arg(long)]
    pub spearman: bool,

    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,

    /// Also write the kappa heatmap as CSV
    #[arg(long)]
    #[serde(skip)]
    pub heatmap: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct MaceArgs {
    #[command(flatten)]
    pub input: MatrixArgs,

    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7])]
    pub threshold: Vec<f64>,

    #[arg(long, default_value_t = 50)]
    pub iterations: usize,

    #[arg(long, default_value_t = 10)]
    pub restarts: usize,

    #[arg(long, default_value_t = 0.01)]
    pub smoothing: f64,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long, default_value = "interval")]
    pub metric: AlphaMetric,

    /// Write the matrix filtered at the first threshold as CSV
    #[arg(long)]
    #[serde(skip)]
    pub filtered: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct TimingArgs {
    #[arg(long)]
    pub records: PathBuf,

    #[arg(long)]
    pub tasks: PathBuf,

    /// Minimum share of rushed HITs that flags a worker
    #[arg(long, default_value_t = 0.5)]
    pub policy: f64,

    #[arg(long, default_value_t = 130)]
    pub wpm: u32,

    /// Minimum distinct HITs for the time-and-count filter
    #[arg(long, default_value_t = 3)]
    pub min_hits: usize,

    #[arg(long, default_value = "all")]
    pub rule: ReadingRule,

    /// Also write an SVG timeline chart
    #[arg(long)]
    #[serde(skip)]
    pub svg: Option<PathBuf>,

    /// Restrict the SVG chart to one worker
    #[arg(long)]
    pub worker: Option<String>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BootstrapArgs {
    /// CSV with an `outcome` column
    #[arg(long)]
    pub outcomes: PathBuf,

    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PermutationArgs {
    #[arg(long)]
    pub a: PathBuf,

    #[arg(long)]
    pub b: PathBuf,

    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct MedianGroupingArgs {
    #[command(flatten)]
    pub input: MatrixArgs,

    #[arg(long, default_value_t = 5)]
    pub group_size: usize,

    #[arg(long, default_value_t = 4)]
    pub groups: usize,

    #[arg(long, default_value = "interval")]
    pub metric: AlphaMetric,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct StabilityArgs {
    /// Registry after endurance
    #[arg(long)]
    pub registry: PathBuf,

    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Also write the pairwise permutation tests as CSV
    #[arg(long)]
    #[serde(skip)]
    pub pairs: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Population spec JSON
    #[arg(long, required_unless_present = "pipeline")]
    pub spec: Option<PathBuf>,

    /// Pipeline spec JSON
    #[arg(long, conflicts_with = "spec")]
    pub pipeline: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Directory receiving the generated files
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct JudgeArgs {
    /// JSON array of {id, reference, candidate}
    #[arg(long)]
    pub pairs: PathBuf,

    /// Judge configuration JSON
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Answer from fixtures instead of the network
    #[arg(long)]
    pub replay: bool,

    #[arg(long)]
    pub fixtures: Option<PathBuf>,

    #[arg(long)]
    pub runs: Option<usize>,

    #[arg(long)]
    pub temperature: Option<f64>,

    /// Save live responses as a fixture file
    #[arg(long)]
    #[serde(skip)]
    pub record_fixtures: Option<PathBuf>,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CostArgs {
    /// Cost inputs JSON
    #[arg(long)]
    pub inputs: PathBuf,

    #[command(flatten)]
    pub output: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub qualification: PathBuf,

    #[arg(long)]
    pub endurance: PathBuf,

    #[arg(long)]
    pub key: PathBuf,

    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub metadata: Option<PathBuf>,

    /// Cost inputs JSON
    #[arg(long)]
    pub cost: Option<PathBuf>,

    /// Annotation batch used for agreement, competence and timing sections
    #[arg(long, requires = "tasks")]
    pub annotations: Option<PathBuf>,

    #[arg(long)]
    pub tasks: Option<PathBuf>,

    #[arg(long, default_value = "interval")]
    pub metric: AlphaMetric,

    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7])]
    pub threshold: Vec<f64>,

    #[arg(long, default_value_t = 0.5)]
    pub policy: f64,

    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Output file; stdout when omitted
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
