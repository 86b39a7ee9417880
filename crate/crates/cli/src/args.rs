use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "netsym", version, about = "Weight-space symmetry toolkit for small feed-forward networks")]
pub struct Cli {
    /// Global seed.
    #[arg(long, global = true, env = "NETSYM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for dataset-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    /// JSON object of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset or an input grid.
    GenData(GenDataArgs),
    /// Train one network.
    Train(TrainArgs),
    /// Train a checkpoint ensemble (one seed per member).
    TrainEnsemble(TrainEnsembleArgs),
    /// Map a checkpoint to its canonical representative.
    Canonicalize(CanonicalizeArgs),
    /// Compare two checkpoints on random inputs.
    VerifyEquivalence(VerifyArgs),
    /// Count permutation and scaling symmetries of an architecture.
    CountSymmetries(CountArgs),
    /// Solve the min-mass problem for a checkpoint.
    Minmass(MinmassArgs),
    /// Layer-wise aggregated MMD between two checkpoint ensembles.
    Mmd(MmdArgs),
    /// Accuracy, calibration and OOD metrics from prediction files.
    Metrics(MetricsArgs),
    /// Pairwise mutual information between ensemble members.
    Collapse(CollapseArgs),
    /// Kendall tau between successive sorting permutations during training.
    TrackPermutations(TrackArgs),
    /// Check that SGD commutes with a hidden-unit permutation.
    EquivarianceCheck(EquivarianceArgs),
    /// Per-coordinate weight marginals across an ensemble.
    Marginals(MarginalsArgs),
    /// Toy two-Gaussian experiment end to end.
    PipelineToy(PipelineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskName {
    TwoGaussians,
    KGaussians,
    Grid,
    GridOod,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "two-gaussians")]
    pub task: TaskName,
    /// Points per class.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Class means as `x1,x2;y1,y2;...` (k-gaussians).
    #[arg(long)]
    pub means: Option<String>,
    #[arg(long)]
    pub no_separability_check: bool,
    /// Grid side length (grid tasks).
    #[arg(long, default_value_t = 20)]
    pub side: usize,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    /// bce, cross_entropy or mse.
    #[arg(long, default_value = "bce")]
    pub loss: String,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Divide the learning rate every this many epochs.
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub lr_decay_divisor: f64,
    /// Final training loss above which a checkpoint is rejected.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainEnsembleArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CanonicalizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// first_param or max_abs.
    #[arg(long, default_value = "first_param")]
    pub key: String,
    #[arg(long, default_value_t = 1.0)]
    pub target_norm: f64,
    #[arg(long)]
    pub include_bias: bool,
    #[arg(long)]
    pub skip_scaling: bool,
    #[arg(long)]
    pub skip_permutation: bool,
    #[arg(long)]
    pub skip_shift: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub inputs: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Architecture JSON or checkpoint.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MinmassArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Also write the rescaled checkpoint.
    #[arg(long)]
    pub out_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MmdArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub canonicalize: bool,
    /// biased or unbiased.
    #[arg(long, default_value = "biased")]
    pub estimator: String,
    /// Permutation-null replicates of the weighted median (0 = none).
    #[arg(long, default_value_t = 0)]
    pub permutations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Comma-separated member prediction CSVs.
    #[arg(long, value_delimiter = ',', required = true)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ood_preds: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CollapseArgs {
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// JSON file with an `inputs` array.
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Pair CSV; the summary goes next to it as `<out>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "max_abs")]
    pub key: String,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EquivarianceArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Permutation per interface as `1,0;2,0,1`; random when absent.
    #[arg(long)]
    pub perm: Option<String>,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MarginalsArgs {
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub layer: usize,
    #[arg(long, default_value = "weight")]
    pub tensor: String,
    /// Flat coordinate indices; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub coords: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Per-neuron norm of the normalized and canonical variants.
    #[arg(long, default_value_t = 3.0)]
    pub norm: f64,
    /// Include rejected checkpoints.
    #[arg(long)]
    pub all: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}
