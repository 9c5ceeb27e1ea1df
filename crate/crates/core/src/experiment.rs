//! End-to-end experiment pipeline: materialize or load a probe-array pair,
//! split and normalize, grid-search each requested model, evaluate the best
//! checkpoint on the held-out array, and write all artifacts into an output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    fit_array_stats, generate_synthetic, load_pbm, normalize, positive_labels, FormatHints,
    NormKind, NormStats, PbmArray, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{
    rank_chart, roc, scatter_with_regression, spearman, tpr_at_fpr, RankChart, RocCurve,
    ScatterFit,
};
use crate::model::{Model, ModelKind, ModelSpec};
use crate::synth::{make_positional_dataset, multi_motif_dataset, PositionEffect};
use crate::tensor::Tensor;
use crate::train::{
    encode_set, full_grid, grid_search, reduced_grid, split_train_val, CellResult, GridOutcome,
    HyperParams, DEFAULT_MAX_EPOCHS,
};

/// Where the train/test array pair comes from. Synthetic sources derive the
/// test array from the same generator with seed + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        spec: SyntheticSpec,
    },
    Positional {
        spec: SyntheticSpec,
        effect: PositionEffect,
        magnitude: f64,
    },
    MultiMotif {
        pwms: Vec<Tensor>,
        probe_count: usize,
        probe_length: usize,
        noise_sd: f64,
        seed: u64,
    },
    Files {
        train_path: PathBuf,
        test_path: PathBuf,
        #[serde(default)]
        hints: FormatHints,
    },
}

/// Which hyperparameter grid to sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    Full,
    Reduced,
}

fn default_max_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

fn default_norm_kind() -> NormKind {
    NormKind::ZScore
}

fn default_filters() -> usize {
    5
}

fn default_motif_len() -> usize {
    11
}

fn default_fc_hidden() -> Option<usize> {
    Some(32)
}

/// Full description of one experiment; serializable as a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub models: Vec<ModelKind>,
    pub grid: GridChoice,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_norm_kind")]
    pub norm_kind: NormKind,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_motif_len")]
    pub motif_len: usize,
    #[serde(default = "default_fc_hidden")]
    pub fc_hidden: Option<usize>,
    /// When set, the experiment fails unless the held-out array's
    /// positive-probe count matches exactly.
    #[serde(default)]
    pub expected_positives: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::arg("experiment", "at least one model kind required"));
        }
        if self.max_epochs == 0 {
            return Err(Error::arg("experiment", "max_epochs must be positive"));
        }
        if self.filters == 0 || self.motif_len == 0 {
            return Err(Error::arg("experiment", "filters and motif_len must be positive"));
        }
        if let DataSource::Positional { magnitude, .. } = &self.data {
            if !(*magnitude >= 0.0 && magnitude.is_finite()) {
                return Err(Error::arg(
                    "experiment",
                    format!("positional magnitude must be finite and >= 0, got {magnitude}"),
                ));
            }
        }
        Ok(())
    }
}

/// Test-array evaluation of one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub best_hyperparams: HyperParams,
    pub best_val_spearman: Option<f64>,
    /// `None` when the correlation is undefined on the test array; the
    /// reason is recorded in `notes`.
    pub test_spearman: Option<f64>,
    pub test_auc: Option<f64>,
    pub test_tpr_at_1pct_fpr: Option<f64>,
    pub scatter_slope: Option<f64>,
    pub scatter_intercept: Option<f64>,
    pub rank_chart: Option<RankChart>,
    pub notes: Vec<String>,
}

/// Inputs every metric can be traced back to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub train_array_sha256: String,
    pub test_array_sha256: String,
    pub train_probes: usize,
    pub val_probes: usize,
    pub test_probes: usize,
    pub test_positives: usize,
    pub normalization: NormStats,
    /// The leakage-scope convention, repeated in every result so downstream
    /// consumers need not guess.
    pub normalization_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub models: Vec<ModelOutcome>,
    pub provenance: Provenance,
}

/// One row of the grid manifest: enough to see what ran, what won, and what
/// failed, without duplicating full checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub hyperparams: HyperParams,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_val_spearman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn cell_summaries(outcome: &GridOutcome, grid: &[HyperParams]) -> Vec<CellSummary> {
    outcome
        .cells
        .iter()
        .enumerate()
        .map(|(index, cell)| match cell {
            CellResult::Completed { report } => CellSummary {
                index,
                hyperparams: report.hyperparams.clone(),
                status: "completed".into(),
                best_epoch: Some(report.best_epoch),
                best_val_spearman: report.best_val_spearman,
                error: None,
            },
            CellResult::Failed { error } => CellSummary {
                index,
                hyperparams: grid[index].clone(),
                status: "failed".into(),
                best_epoch: None,
                best_val_spearman: None,
                error: Some(error.clone()),
            },
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Canonical bytes of an array's raw content (same layout `write_tsv` uses),
/// hashed for provenance.
pub fn array_sha256(array: &PbmArray) -> String {
    let mut s = String::from("sequence\tsignal\n");
    for p in &array.probes {
        s.push_str(&format!("{}\t{}\n", p.sequence, p.raw_intensity));
    }
    sha256_hex(s.as_bytes())
}

/// Serializes as pretty JSON with a trailing newline (stable across runs).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut s = String::from("fpr,tpr\n");
    for &(fpr, tpr) in &curve.points {
        s.push_str(&format!("{fpr},{tpr}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_scatter_csv(path: &Path, fit: &ScatterFit) -> Result<()> {
    let mut s = String::from("predicted,measured\n");
    for &(p, m) in &fit.pairs {
        s.push_str(&format!("{p},{m}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_rank_chart_csv(path: &Path, chart: &RankChart) -> Result<()> {
    let mut s = String::from("positive_rank,predicted_rank\n");
    for (i, &r) in chart.ranks.iter().enumerate() {
        s.push_str(&format!("{},{r}\n", i + 1));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Builds (or loads) the train/test array pair for a data source.
pub fn materialize_arrays(source: &DataSource) -> Result<(PbmArray, PbmArray)> {
    match source {
        DataSource::Synthetic { spec } => {
            let train = generate_synthetic(spec)?;
            let test = generate_synthetic(&SyntheticSpec { seed: spec.seed + 1, ..spec.clone() })?;
            Ok((train, test))
        }
        DataSource::Positional { spec, effect, magnitude } => {
            let train = make_positional_dataset(spec, *effect, *magnitude)?;
            let test = make_positional_dataset(
                &SyntheticSpec { seed: spec.seed + 1, ..spec.clone() },
                *effect,
                *magnitude,
            )?;
            Ok((train, test))
        }
        DataSource::MultiMotif { pwms, probe_count, probe_length, noise_sd, seed } => {
            let train = multi_motif_dataset(pwms, *probe_count, *probe_length, *noise_sd, *seed)?;
            let test =
                multi_motif_dataset(pwms, *probe_count, *probe_length, *noise_sd, *seed + 1)?;
            Ok((train, test))
        }
        DataSource::Files { train_path, test_path, hints } => {
            let (train, _) = load_pbm(train_path, hints)?;
            let (test, _) = load_pbm(test_path, hints)?;
            Ok((train, test))
        }
    }
}

const NORMALIZATION_NOTE: &str = "intensity statistics fitted on the training split of the \
training array and applied unchanged to the validation split and the held-out test array";

/// Runs the full pipeline and writes every artifact under `spec.out_dir`:
/// `experiment.json` (config echo), per-model `report.json`,
/// `checkpoint.json`, `grid_manifest.json`, `metrics.json` and metric CSVs,
/// plus `result.json` and a `manifest.json` listing all files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let (array1, array2) = materialize_arrays(&spec.data)?;

    fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
    let mut written: Vec<String> = Vec::new();
    write_json(&spec.out_dir.join("experiment.json"), spec)?;
    written.push("experiment.json".into());

    // Split on raw intensities, then fit normalization on the training
    // portion only; validation and test see the same statistics.
    let (train_raw, val_raw) = split_train_val(&array1, 0.7, spec.seed)?;
    let stats = fit_array_stats(&train_raw, spec.norm_kind)?;
    let train_norm = normalize(&train_raw, &stats);
    let val_norm = normalize(&val_raw, &stats);
    let test_norm = normalize(&array2, &stats);

    let test_set = encode_set(&test_norm)?;
    let labels = positive_labels(&test_set.targets)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if let Some(expected) = spec.expected_positives {
        if positives != expected {
            return Err(Error::arg(
                "experiment",
                format!(
                    "held-out array has {positives} positive probes under the median + 4 sigma \
                     rule, expected {expected}"
                ),
            ));
        }
    }

    let train_set = encode_set(&train_norm)?;
    let val_set = encode_set(&val_norm)?;

    let mut outcomes = Vec::with_capacity(spec.models.len());
    for &kind in &spec.models {
        let base = ModelSpec {
            kind,
            filters: spec.filters,
            motif_len: spec.motif_len,
            lstm_arch: None,
            fc_hidden: spec.fc_hidden,
            dropout: 0.0,
        };
        let grid = match spec.grid {
            GridChoice::Full => full_grid(kind, spec.max_epochs, spec.seed),
            GridChoice::Reduced => reduced_grid(kind, spec.max_epochs, spec.seed),
        };
        let outcome = grid_search(&base, &train_set, &val_set, &grid)?;
        let best = outcome.best();

        let dir = spec.out_dir.join(kind.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let rel = |name: &str| format!("{kind}/{name}");

        write_json(&dir.join("grid_manifest.json"), &cell_summaries(&outcome, &grid))?;
        written.push(rel("grid_manifest.json"));
        write_json(&dir.join("report.json"), best)?;
        written.push(rel("report.json"));
        best.checkpoint.save(&dir.join("checkpoint.json"))?;
        written.push(rel("checkpoint.json"));

        let model = Model::from_checkpoint(&best.checkpoint)?;
        let mut preds = Vec::with_capacity(test_set.len());
        for x in &test_set.inputs {
            preds.push(model.predict_tensor(x)?);
        }

        let mut notes = Vec::new();
        let test_spearman = match spearman(&preds, &test_set.targets) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("test spearman undefined: {e}"));
                None
            }
        };
        let (test_auc, test_tpr, roc_curve) = match roc(&preds, &labels) {
            Ok(curve) => {
                let tpr = tpr_at_fpr(&curve, 0.01)?;
                (Some(curve.auc), Some(tpr), Some(curve))
            }
            Err(e) => {
                notes.push(format!("roc undefined: {e}"));
                (None, None, None)
            }
        };
        if let Some(curve) = &roc_curve {
            write_roc_csv(&dir.join("roc.csv"), curve)?;
            written.push(rel("roc.csv"));
        }
        let scatter = match scatter_with_regression(&preds, &test_set.targets) {
            Ok(fit) => {
                write_scatter_csv(&dir.join("scatter.csv"), &fit)?;
                written.push(rel("scatter.csv"));
                Some(fit)
            }
            Err(e) => {
                notes.push(format!("scatter regression undefined: {e}"));
                None
            }
        };
        let k = positives.min(100);
        let chart = if k > 0 {
            let chart = rank_chart(&preds, &test_set.targets, &labels, k)?;
            write_rank_chart_csv(&dir.join("rankchart.csv"), &chart)?;
            written.push(rel("rankchart.csv"));
            Some(chart)
        } else {
            notes.push("no positive probes; rank chart skipped".into());
            None
        };

        let model_outcome = ModelOutcome {
            kind,
            best_hyperparams: best.hyperparams.clone(),
            best_val_spearman: best.best_val_spearman,
            test_spearman,
            test_auc,
            test_tpr_at_1pct_fpr: test_tpr,
            scatter_slope: scatter.as_ref().map(|f| f.slope),
            scatter_intercept: scatter.as_ref().map(|f| f.intercept),
            rank_chart: chart,
            notes,
        };
        write_json(&dir.join("metrics.json"), &model_outcome)?;
        written.push(rel("metrics.json"));
        outcomes.push(model_outcome);
    }

    let result = ExperimentResult {
        models: outcomes,
        provenance: Provenance {
            seed: spec.seed,
            train_array_sha256: array_sha256(&array1),
            test_array_sha256: array_sha256(&array2),
            train_probes: train_norm.len(),
            val_probes: val_norm.len(),
            test_probes: test_norm.len(),
            test_positives: positives,
            normalization: stats,
            normalization_note: NORMALIZATION_NOTE.into(),
        },
    };
    write_json(&spec.out_dir.join("result.json"), &result)?;
    written.push("result.json".into());
    written.sort();
    write_json(&spec.out_dir.join("manifest.json"), &written)?;
    Ok(result)
}
