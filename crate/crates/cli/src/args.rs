//! Flag definitions for every subcommand. All randomness flows from --seed
//! flags; nothing reads the clock or environment variables.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deeperbind_core::{FormatHints, GridChoice, ModelKind, NormKind, PositionEffect};

#[derive(Debug, Parser)]
#[command(
    name = "deeperbind",
    version,
    about = "Train and evaluate protein-DNA binding intensity models on probe arrays",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One-hot encode DNA sequences to JSON matrices
    #[command(args_override_self = true)]
    Encode(EncodeArgs),
    /// Generate synthetic probe arrays with planted motifs
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Train a single model and save its best checkpoint
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Hyperparameter grid search with a resumable cell manifest
    #[command(args_override_self = true)]
    Grid(GridArgs),
    /// Score a checkpoint on a probe file and write metrics, CSVs, and SVGs
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Run a full experiment (data, grid search, evaluation, artifacts)
    #[command(args_override_self = true)]
    Experiment(ExperimentArgs),
    /// Render a metric CSV as a deterministic SVG chart
    #[command(args_override_self = true)]
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Deepbind,
    Deeperbind,
}

impl ModelArg {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelArg::Deepbind => ModelKind::DeepBind,
            ModelArg::Deeperbind => ModelKind::DeeperBind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Full,
    Reduced,
}

impl GridArg {
    pub fn choice(self) -> GridChoice {
        match self {
            GridArg::Full => GridChoice::Full,
            GridArg::Reduced => GridChoice::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EffectArg {
    CenterBoost,
    EdgePenalty,
}

impl EffectArg {
    pub fn effect(self) -> PositionEffect {
        match self {
            EffectArg::CenterBoost => PositionEffect::CenterBoost,
            EffectArg::EdgePenalty => PositionEffect::EdgePenalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Roc,
    Scatter,
    Rank,
}

pub fn parse_norm(s: &str) -> Result<NormKind, String> {
    s.parse().map_err(|e: deeperbind_core::Error| e.to_string())
}

/// Column layout flags shared by every command that reads probe files.
#[derive(Debug, Args)]
pub struct FormatArgs {
    /// Column delimiter for tabular probe files
    #[arg(long, default_value_t = '\t')]
    pub delimiter: char,
    /// Zero-based column holding the probe sequence
    #[arg(long, default_value_t = 0)]
    pub sequence_column: usize,
    /// Zero-based column holding the signal intensity
    #[arg(long, default_value_t = 1)]
    pub signal_column: usize,
    /// Force header presence (true/false); auto-detected when omitted
    #[arg(long)]
    pub header: Option<bool>,
}

impl FormatArgs {
    pub fn hints(&self) -> FormatHints {
        FormatHints {
            delimiter: self.delimiter,
            sequence_column: self.sequence_column,
            signal_column: self.signal_column,
            header: self.header,
        }
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Inline DNA sequence to encode
    #[arg(long, conflicts_with = "data")]
    pub sequence: Option<String>,
    /// Probe file whose sequences are encoded
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output JSON path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset family
    #[arg(long, value_enum, default_value_t = GenKind::Planted)]
    pub kind: GenKind,
    /// Probe count
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    /// Probe length in bases
    #[arg(long, default_value_t = 36)]
    pub length: usize,
    /// Width of the default motif when no --pwm file is given
    #[arg(long, default_value_t = 8)]
    pub motif_len: usize,
    /// Log-odds strength of the default motif
    #[arg(long, default_value_t = 4.0)]
    pub motif_strength: f64,
    /// Motif weight matrix as a JSON tensor file; repeatable for kind=multi
    #[arg(long)]
    pub pwm: Vec<PathBuf>,
    /// Gaussian intensity noise standard deviation
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Fraction of probes that carry a planted motif
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    /// Positional effect for kind=positional
    #[arg(long, value_enum, default_value_t = EffectArg::CenterBoost)]
    pub effect: EffectArg,
    /// Positional effect magnitude for kind=positional
    #[arg(long, default_value_t = 0.5)]
    pub magnitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output probe file (.tsv or .tsv.gz)
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Planted,
    Positional,
    Multi,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training probe file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Deeperbind)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Stacked LSTM hidden sizes, colon-separated (default 10:10 for the
    /// recurrent model)
    #[arg(long)]
    pub lstm_arch: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convolution filter count
    #[arg(long, default_value_t = 5)]
    pub filters: usize,
    /// Convolution filter width
    #[arg(long, default_value_t = 11)]
    pub motif_len: usize,
    /// Readout hidden width; 0 means a direct linear readout
    #[arg(long, default_value_t = 32)]
    pub fc_hidden: usize,
    /// Intensity normalization: zscore | log_zscore
    #[arg(long, default_value = "zscore", value_parser = parse_norm)]
    pub norm: NormKind,
    /// Fraction of probes kept for training (rest is validation)
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Output directory for report.json, checkpoint.json, stats.json
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Training probe file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Deeperbind)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = GridArg::Reduced)]
    pub grid: GridArg,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub filters: usize,
    #[arg(long, default_value_t = 11)]
    pub motif_len: usize,
    /// Readout hidden width; 0 means a direct linear readout
    #[arg(long, default_value_t = 32)]
    pub fc_hidden: usize,
    /// Intensity normalization: zscore | log_zscore
    #[arg(long, default_value = "zscore", value_parser = parse_norm)]
    pub norm: NormKind,
    /// Fraction of probes kept for training (rest is validation)
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Discard any existing manifest and cell results, starting over
    #[arg(long)]
    pub fresh: bool,
    /// Output directory (manifest, per-cell reports, winner artifacts)
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model checkpoint JSON
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Probe file to score
    #[arg(long)]
    pub data: PathBuf,
    /// Normalization statistics JSON saved by train/grid; when omitted the
    /// statistics are fitted on the evaluation data itself (noted in output)
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Normalization kind when self-fitting: zscore | log_zscore
    #[arg(long, default_value = "zscore", value_parser = parse_norm)]
    pub norm: NormKind,
    /// Output directory for metrics.json, CSVs, and SVGs
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment description JSON (data source, models, grid, seed, out_dir)
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the spec's output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metric CSV produced by evaluate/experiment (roc, scatter, or rank chart)
    #[arg(long)]
    pub input: PathBuf,
    /// Chart kind; inferred from the CSV header when omitted
    #[arg(long, value_enum)]
    pub kind: Option<PlotKind>,
    /// Chart title
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG path
    #[arg(long)]
    pub out: PathBuf,
    /// Config file (JSON object or key=value lines) supplying default flags
    #[arg(long)]
    pub config: Option<PathBuf>,
}
