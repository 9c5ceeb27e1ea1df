//! Loss, RMSProp with learning-rate and weight decay, the mini-batch
//! training loop with validation-based checkpoint selection, and grid search
//! over the standard hyperparameter ranges.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{zero_grads, Tape, Variable};
use crate::data::PbmArray;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::metrics::spearman;
use crate::model::{Checkpoint, Model, ModelKind, ModelSpec};
use crate::seeding::{stream_rng, STREAM_DROPOUT, STREAM_SHUFFLE, STREAM_SPLIT};
use crate::tensor::Tensor;

/// Hyperparameter ranges swept by the full grid search.
pub const GRID_LEARNING_RATES: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const GRID_LR_DECAYS: [f64; 3] = [1e-7, 1e-4, 0.0];
pub const GRID_WEIGHT_DECAYS: [f64; 2] = [1e-5, 0.0];
pub const GRID_LSTM_ARCHS: [&str; 5] = ["30", "20", "30:20", "10:10", "10:20"];
pub const GRID_DROPOUTS: [f64; 3] = [0.0, 0.2, 0.5];
pub const GRID_BATCH_SIZES: [usize; 2] = [40, 100];

/// RMSProp smoothing and stabilizer constants.
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

pub const DEFAULT_MAX_EPOCHS: usize = 50;

/// One grid-search cell. `lstm_arch` and `dropout` override the base model
/// spec so the grid can sweep architecture alongside optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub lstm_arch: Option<String>,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 1e-2,
            lr_decay: 0.0,
            weight_decay: 0.0,
            lstm_arch: None,
            dropout: 0.0,
            batch_size: 100,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Checks basic sanity always, and membership in the standard grid
    /// ranges unless `allow_custom` is set.
    pub fn validate(&self, allow_custom: bool) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(
                "hyperparams",
                format!("learning_rate must be positive, got {}", self.learning_rate),
            ));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::arg(
                "hyperparams",
                format!("lr_decay must be >= 0, got {}", self.lr_decay),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::arg(
                "hyperparams",
                format!("weight_decay must be >= 0, got {}", self.weight_decay),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg(
                "hyperparams",
                format!("dropout must lie in [0, 1), got {}", self.dropout),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("hyperparams", "batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::arg("hyperparams", "max_epochs must be positive"));
        }
        if allow_custom {
            return Ok(());
        }
        let in_set = |v: f64, set: &[f64]| set.iter().any(|&s| s == v);
        if !in_set(self.learning_rate, &GRID_LEARNING_RATES) {
            return Err(Error::arg(
                "hyperparams",
                format!(
                    "learning_rate {} not in {:?}; pass the custom override to allow it",
                    self.learning_rate, GRID_LEARNING_RATES
                ),
            ));
        }
        if !in_set(self.lr_decay, &GRID_LR_DECAYS) {
            return Err(Error::arg(
                "hyperparams",
                format!(
                    "lr_decay {} not in {:?}; pass the custom override to allow it",
                    self.lr_decay, GRID_LR_DECAYS
                ),
            ));
        }
        if !in_set(self.weight_decay, &GRID_WEIGHT_DECAYS) {
            return Err(Error::arg(
                "hyperparams",
                format!(
                    "weight_decay {} not in {:?}; pass the custom override to allow it",
                    self.weight_decay, GRID_WEIGHT_DECAYS
                ),
            ));
        }
        if let Some(arch) = &self.lstm_arch {
            if !GRID_LSTM_ARCHS.contains(&arch.as_str()) {
                return Err(Error::arg(
                    "hyperparams",
                    format!(
                        "lstm_arch {arch:?} not in {GRID_LSTM_ARCHS:?}; pass the custom override to allow it"
                    ),
                ));
            }
        }
        if !in_set(self.dropout, &GRID_DROPOUTS) {
            return Err(Error::arg(
                "hyperparams",
                format!(
                    "dropout {} not in {:?}; pass the custom override to allow it",
                    self.dropout, GRID_DROPOUTS
                ),
            ));
        }
        if !GRID_BATCH_SIZES.contains(&self.batch_size) {
            return Err(Error::arg(
                "hyperparams",
                format!(
                    "batch_size {} not in {:?}; pass the custom override to allow it",
                    self.batch_size, GRID_BATCH_SIZES
                ),
            ));
        }
        Ok(())
    }

    /// The model spec this cell trains: the base spec with this cell's
    /// architecture and dropout substituted in.
    pub fn merged_spec(&self, base: &ModelSpec) -> ModelSpec {
        let mut spec = base.clone();
        spec.lstm_arch = self.lstm_arch.clone();
        spec.dropout = self.dropout;
        spec
    }
}

/// Mean squared error over paired predictions and targets.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(
            "mse",
            format!("{} predictions vs {} targets", predictions.len(), targets.len()),
        ));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput { op: "mse" });
    }
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Per-parameter mean-square accumulators plus the shared step counter.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    ms: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl RmsPropState {
    pub fn new(params: &[Variable]) -> Self {
        RmsPropState {
            ms: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step_count: 0,
        }
    }

    /// Mean-square accumulator for parameter `i` (test hook).
    pub fn mean_square(&self, i: usize) -> &[f64] {
        &self.ms[i]
    }
}

/// One optimizer step over all parameters:
/// g = grad + weight_decay * value, ms = rho * ms + (1 - rho) * g^2,
/// value -= eta_t * g / sqrt(ms + eps), with the learning rate decayed as
/// eta_t = learning_rate / (1 + lr_decay * step_count). The step counter
/// advances once per call (i.e. once per batch).
pub fn rmsprop_step(params: &[Variable], state: &mut RmsPropState, hp: &HyperParams) -> Result<()> {
    if params.len() != state.ms.len() {
        return Err(Error::shape(
            "rmsprop_step",
            format!("{} params vs {} accumulators", params.len(), state.ms.len()),
        ));
    }
    let eta = hp.learning_rate / (1.0 + hp.lr_decay * state.step_count as f64);
    for (p, ms) in params.iter().zip(state.ms.iter_mut()) {
        if p.numel() != ms.len() {
            return Err(Error::shape(
                "rmsprop_step",
                format!("param has {} entries, accumulator {}", p.numel(), ms.len()),
            ));
        }
        p.update(|values, grads| {
            for j in 0..values.len() {
                let g = grads[j] + hp.weight_decay * values[j];
                ms[j] = RMSPROP_RHO * ms[j] + (1.0 - RMSPROP_RHO) * g * g;
                values[j] -= eta * g / (ms[j] + RMSPROP_EPS).sqrt();
            }
        });
    }
    state.step_count += 1;
    Ok(())
}

/// Deterministic shuffled split. The first ceil(fraction * n) probes of the
/// shuffle become the training portion (capped at n - 1 so the validation
/// side is never empty); the rest are validation.
pub fn split_train_val(array: &PbmArray, fraction: f64, seed: u64) -> Result<(PbmArray, PbmArray)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(
            "split_train_val",
            format!("fraction must lie strictly inside (0, 1), got {fraction}"),
        ));
    }
    let n = array.probes.len();
    if n < 2 {
        return Err(Error::arg(
            "split_train_val",
            format!("need at least 2 probes to split, got {n}"),
        ));
    }
    let target = fraction * n as f64;
    // Guard against float fuzz making e.g. 0.7 * 10 land a hair above 7.
    let mut train_n = if (target - target.round()).abs() < 1e-9 {
        target.round() as usize
    } else {
        target.ceil() as usize
    };
    train_n = train_n.clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    order.shuffle(&mut rng);

    let pick = |idx: &[usize]| PbmArray {
        label: array.label.clone(),
        probes: idx.iter().map(|&i| array.probes[i].clone()).collect(),
        normalization: array.normalization,
    };
    Ok((pick(&order[..train_n]), pick(&order[train_n..])))
}

/// Probes encoded once for the training loop: one-hot inputs paired with
/// normalized intensity targets.
#[derive(Debug, Clone)]
pub struct EncodedSet {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<f64>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Encodes a normalized array for training. Errors if normalization has not
/// been applied.
pub fn encode_set(array: &PbmArray) -> Result<EncodedSet> {
    let mut inputs = Vec::with_capacity(array.probes.len());
    let mut targets = Vec::with_capacity(array.probes.len());
    for p in &array.probes {
        let t = p.normalized_intensity.ok_or_else(|| {
            Error::arg("encode_set", "probes must be normalized before training")
        })?;
        inputs.push(crate::encoding::one_hot(&p.sequence));
        targets.push(t);
    }
    Ok(EncodedSet { inputs, targets })
}

/// Record of one training run. `wall_seconds` is measured but excluded from
/// the serialized form so that reports are byte-identical across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub hyperparams: HyperParams,
    /// Mean per-batch loss of each epoch.
    pub train_loss: Vec<f64>,
    /// Validation Spearman after each epoch; `None` when the correlation is
    /// undefined (e.g. constant predictions or constant targets).
    pub val_spearman: Vec<Option<f64>>,
    /// Epoch whose checkpoint is kept: the earliest maximum among defined
    /// validation Spearmans, or the final epoch if none were defined.
    pub best_epoch: usize,
    pub best_val_spearman: Option<f64>,
    pub checkpoint: Checkpoint,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Trains `hp.max_epochs` epochs of mini-batch RMSProp on the merged spec,
/// scoring validation Spearman in eval mode after each epoch and keeping the
/// checkpoint of the best epoch (ties resolved to the earliest).
pub fn train(
    base_spec: &ModelSpec,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    hp: &HyperParams,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyInput { op: "train" });
    }
    if hp.max_epochs == 0 || hp.batch_size == 0 {
        return Err(Error::arg("train", "max_epochs and batch_size must be positive"));
    }
    let spec = hp.merged_spec(base_spec);
    spec.validate()?;

    let started = Instant::now();
    let model = Model::init(&spec, hp.seed)?;
    let params = model.params();
    let mut opt = RmsPropState::new(&params);
    let mut shuffle_rng = stream_rng(hp.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(hp.seed, STREAM_DROPOUT);

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut train_loss = Vec::with_capacity(hp.max_epochs);
    let mut val_history: Vec<Option<f64>> = Vec::with_capacity(hp.max_epochs);
    let mut best: Option<(usize, f64)> = None;
    let mut best_checkpoint: Option<Checkpoint> = None;

    for epoch in 0..hp.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            zero_grads(&params);
            let inv_b = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let mut tape = Tape::new();
                let mut mode = Mode::Train { dropout_rng: &mut dropout_rng };
                let x = Variable::leaf(train_set.inputs[i].clone());
                let pred = model.forward(&mut tape, &x, &mut mode)?;
                let target = Variable::leaf(Tensor::scalar(train_set.targets[i]));
                let diff = tape.sub(&pred, &target)?;
                let sq = tape.pow_scalar(&diff, 2.0)?;
                let contrib = tape.scale(&sq, inv_b)?;
                tape.backward(&contrib)?;
                batch_loss += contrib.item()?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: batch_loss });
            }
            rmsprop_step(&params, &mut opt, hp)?;
            loss_sum += batch_loss;
            batches += 1;
        }
        train_loss.push(loss_sum / batches as f64);

        let mut preds = Vec::with_capacity(val_set.len());
        for x in &val_set.inputs {
            let p = model.predict_tensor(x)?;
            if !p.is_finite() {
                return Err(Error::Diverged { epoch, loss: p });
            }
            preds.push(p);
        }
        // Undefined correlation (constant predictions or targets) is not a
        // failure; the epoch simply records no score.
        let val_sp = spearman(&preds, &val_set.targets).ok();
        val_history.push(val_sp);
        if let Some(v) = val_sp {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((epoch, v));
                best_checkpoint = Some(model.to_checkpoint());
            }
        }
    }

    let (best_epoch, best_val_spearman) = match best {
        Some((e, v)) => (e, Some(v)),
        None => (hp.max_epochs - 1, None),
    };
    Ok(TrainReport {
        hyperparams: hp.clone(),
        train_loss,
        val_spearman: val_history,
        best_epoch,
        best_val_spearman,
        // With no defined validation score the final (most trained) state is
        // kept.
        checkpoint: best_checkpoint.unwrap_or_else(|| model.to_checkpoint()),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Outcome of one grid cell: the report, or the error that aborted it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellResult {
    Completed { report: TrainReport },
    Failed { error: String },
}

impl CellResult {
    pub fn report(&self) -> Option<&TrainReport> {
        match self {
            CellResult::Completed { report } => Some(report),
            CellResult::Failed { .. } => None,
        }
    }
}

/// All cell outcomes plus the winning index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_index: usize,
    pub cells: Vec<CellResult>,
}

impl GridOutcome {
    pub fn best(&self) -> &TrainReport {
        self.cells[self.best_index]
            .report()
            .expect("best_index always points at a completed cell")
    }

    pub fn best_hyperparams(&self) -> &HyperParams {
        &self.best().hyperparams
    }
}

fn select_best(cells: &[CellResult]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in cells.iter().enumerate() {
        if let Some(report) = cell.report() {
            // Cells with no defined validation score rank below any scored
            // cell; strict comparison keeps the earliest index on ties.
            let score = report.best_val_spearman.unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(_, v)| score > v) {
                best = Some((i, score));
            }
        }
    }
    match best {
        Some((i, _)) => Ok(i),
        None => {
            let mut details = String::from("every grid cell failed:");
            for (i, cell) in cells.iter().enumerate() {
                if let CellResult::Failed { error } = cell {
                    details.push_str(&format!("\n  cell {i}: {error}"));
                }
            }
            Err(Error::arg("grid_search", details))
        }
    }
}

fn run_grid(
    base_spec: &ModelSpec,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    grid: &[HyperParams],
    parallel: bool,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::EmptyInput { op: "grid_search" });
    }
    let run_cell = |hp: &HyperParams| match train(base_spec, train_set, val_set, hp) {
        Ok(report) => CellResult::Completed { report },
        Err(e) => CellResult::Failed { error: format!("{e}; hyperparams: {hp:?}") },
    };
    let cells: Vec<CellResult> = if parallel {
        grid.par_iter().map(run_cell).collect()
    } else {
        grid.iter().map(run_cell).collect()
    };
    let best_index = select_best(&cells)?;
    Ok(GridOutcome { best_index, cells })
}

/// Trains every cell (in parallel), never aborting on individual cell
/// failures; the winner is the completed cell with the highest
/// best-validation Spearman, ties resolved to the earlier index.
pub fn grid_search(
    base_spec: &ModelSpec,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    grid: &[HyperParams],
) -> Result<GridOutcome> {
    run_grid(base_spec, train_set, val_set, grid, true)
}

/// Serial variant with identical results; exists so determinism across
/// execution strategies is testable.
pub fn grid_search_serial(
    base_spec: &ModelSpec,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    grid: &[HyperParams],
) -> Result<GridOutcome> {
    run_grid(base_spec, train_set, val_set, grid, false)
}

/// The full hyperparameter product for one model kind: 540 cells for the
/// recurrent model (5 architectures), 108 for the baseline. Cells share one
/// seed so differences are attributable to hyperparameters.
pub fn full_grid(kind: ModelKind, max_epochs: usize, seed: u64) -> Vec<HyperParams> {
    let archs: Vec<Option<String>> = match kind {
        ModelKind::DeepBind => vec![None],
        ModelKind::DeeperBind => GRID_LSTM_ARCHS.iter().map(|a| Some(a.to_string())).collect(),
    };
    let mut grid = Vec::new();
    for &learning_rate in &GRID_LEARNING_RATES {
        for &lr_decay in &GRID_LR_DECAYS {
            for &weight_decay in &GRID_WEIGHT_DECAYS {
                for arch in &archs {
                    for &dropout in &GRID_DROPOUTS {
                        for &batch_size in &GRID_BATCH_SIZES {
                            grid.push(HyperParams {
                                learning_rate,
                                lr_decay,
                                weight_decay,
                                lstm_arch: arch.clone(),
                                dropout,
                                batch_size,
                                max_epochs,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    grid
}

/// Two-cell quick grid (learning rate 1e-2 vs 1e-3, no decay, no dropout,
/// batch 100, single 10:10 architecture for the recurrent model).
pub fn reduced_grid(kind: ModelKind, max_epochs: usize, seed: u64) -> Vec<HyperParams> {
    let arch = match kind {
        ModelKind::DeepBind => None,
        ModelKind::DeeperBind => Some("10:10".to_string()),
    };
    [1e-2, 1e-3]
        .iter()
        .map(|&learning_rate| HyperParams {
            learning_rate,
            lr_decay: 0.0,
            weight_decay: 0.0,
            lstm_arch: arch.clone(),
            dropout: 0.0,
            batch_size: 100,
            max_epochs,
            seed,
        })
        .collect()
}
