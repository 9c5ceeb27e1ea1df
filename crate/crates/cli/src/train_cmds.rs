//! `train` and `grid`: single runs and resumable hyperparameter sweeps.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use deeperbind_core::{
    encode_set, fit_array_stats, full_grid, load_pbm, normalize, reduced_grid, split_train_val,
    train as train_model, write_json, CellSummary, EncodedSet, HyperParams, ModelKind, ModelSpec,
    NormKind, NormStats, TrainReport,
};

use crate::args::{FormatArgs, GridArg, GridArgs, TrainArgs};

fn fc_option(width: usize) -> Option<usize> {
    if width == 0 {
        None
    } else {
        Some(width)
    }
}

fn spearman_text(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "undefined".to_string(),
    }
}

/// Loads a probe file, splits it on raw intensities, fits normalization on
/// the training portion only, and one-hot encodes both portions.
fn prepare_sets(
    data: &Path,
    format: &FormatArgs,
    norm: NormKind,
    train_fraction: f64,
    seed: u64,
) -> Result<(EncodedSet, EncodedSet, NormStats)> {
    let (array, report) = load_pbm(data, &format.hints())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let (train_raw, val_raw) = split_train_val(&array, train_fraction, seed)?;
    let stats = fit_array_stats(&train_raw, norm)?;
    let train_set = encode_set(&normalize(&train_raw, &stats))?;
    let val_set = encode_set(&normalize(&val_raw, &stats))?;
    Ok((train_set, val_set, stats))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let kind = args.model.kind();
    let lstm_arch = match (kind, args.lstm_arch.clone()) {
        (ModelKind::DeeperBind, None) => Some("10:10".to_string()),
        (_, other) => other,
    };
    let hp = HyperParams {
        learning_rate: args.learning_rate,
        lr_decay: args.lr_decay,
        weight_decay: args.weight_decay,
        lstm_arch,
        dropout: args.dropout,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        seed: args.seed,
    };
    hp.validate(true)?;
    let base = ModelSpec {
        kind,
        filters: args.filters,
        motif_len: args.motif_len,
        lstm_arch: None,
        fc_hidden: fc_option(args.fc_hidden),
        dropout: 0.0,
    };
    let (train_set, val_set, stats) =
        prepare_sets(&args.data, &args.format, args.norm, args.train_fraction, args.seed)?;

    let report = train_model(&base, &train_set, &val_set, &hp)?;

    fs::create_dir_all(&args.out).with_context(|| format!("{}", args.out.display()))?;
    write_json(&args.out.join("report.json"), &report)?;
    report.checkpoint.save(&args.out.join("checkpoint.json"))?;
    write_json(&args.out.join("stats.json"), &stats)?;
    println!(
        "trained {kind} ({} train / {} validation probes): best epoch {}, validation spearman {}",
        train_set.len(),
        val_set.len(),
        report.best_epoch,
        spearman_text(report.best_val_spearman)
    );
    Ok(())
}

fn pending_summary(index: usize, hp: &HyperParams) -> CellSummary {
    CellSummary {
        index,
        hyperparams: hp.clone(),
        status: "pending".into(),
        best_epoch: None,
        best_val_spearman: None,
        error: None,
    }
}

fn cell_path(out: &Path, index: usize) -> std::path::PathBuf {
    out.join("cells").join(format!("cell_{index}.json"))
}

/// Grid search that survives interruption: every finished cell is recorded
/// in `cells/cell_<i>.json` and the manifest is rewritten after each cell,
/// so rerunning the same command picks up where it stopped.
pub fn grid(args: &GridArgs) -> Result<()> {
    let kind = args.model.kind();
    let cells: Vec<HyperParams> = match args.grid {
        GridArg::Full => full_grid(kind, args.epochs, args.seed),
        GridArg::Reduced => reduced_grid(kind, args.epochs, args.seed),
    };
    let base = ModelSpec {
        kind,
        filters: args.filters,
        motif_len: args.motif_len,
        lstm_arch: None,
        fc_hidden: fc_option(args.fc_hidden),
        dropout: 0.0,
    };
    let (train_set, val_set, stats) =
        prepare_sets(&args.data, &args.format, args.norm, args.train_fraction, args.seed)?;

    fs::create_dir_all(args.out.join("cells"))
        .with_context(|| format!("{}", args.out.display()))?;
    let manifest_path = args.out.join("grid_manifest.json");

    let mut summaries: Vec<CellSummary> = if manifest_path.exists() && !args.fresh {
        let text = fs::read_to_string(&manifest_path)
            .with_context(|| format!("{}", manifest_path.display()))?;
        let loaded: Vec<CellSummary> = serde_json::from_str(&text)
            .with_context(|| format!("manifest {}", manifest_path.display()))?;
        if loaded.len() != cells.len() {
            bail!(
                "existing manifest at {} has {} cells but this grid has {}; \
                 rerun with --fresh or a new --out",
                manifest_path.display(),
                loaded.len(),
                cells.len()
            );
        }
        for (i, s) in loaded.iter().enumerate() {
            if s.hyperparams != cells[i] {
                bail!(
                    "existing manifest cell {i} was produced with different hyperparameters; \
                     rerun with --fresh or a new --out"
                );
            }
        }
        loaded
    } else {
        cells.iter().enumerate().map(|(i, hp)| pending_summary(i, hp)).collect()
    };
    write_json(&manifest_path, &summaries)?;

    let mut reports: Vec<Option<TrainReport>> = vec![None; cells.len()];
    for i in 0..cells.len() {
        match summaries[i].status.as_str() {
            "completed" => {
                let path = cell_path(&args.out, i);
                match fs::read_to_string(&path) {
                    Ok(text) => {
                        reports[i] = Some(serde_json::from_str(&text).with_context(|| {
                            format!("cell result {}", path.display())
                        })?);
                        println!("cell {i}: already completed, skipping");
                        continue;
                    }
                    // Manifest says done but the result file is gone: retrain.
                    Err(_) => summaries[i] = pending_summary(i, &cells[i]),
                }
            }
            "failed" => {
                println!(
                    "cell {i}: previously failed ({}), skipping",
                    summaries[i].error.as_deref().unwrap_or("unknown error")
                );
                continue;
            }
            _ => {}
        }
        match train_model(&base, &train_set, &val_set, &cells[i]) {
            Ok(report) => {
                write_json(&cell_path(&args.out, i), &report)?;
                summaries[i] = CellSummary {
                    index: i,
                    hyperparams: report.hyperparams.clone(),
                    status: "completed".into(),
                    best_epoch: Some(report.best_epoch),
                    best_val_spearman: report.best_val_spearman,
                    error: None,
                };
                println!(
                    "cell {i}: completed, validation spearman {}",
                    spearman_text(report.best_val_spearman)
                );
                reports[i] = Some(report);
            }
            Err(e) => {
                summaries[i] = CellSummary {
                    index: i,
                    hyperparams: cells[i].clone(),
                    status: "failed".into(),
                    best_epoch: None,
                    best_val_spearman: None,
                    error: Some(e.to_string()),
                };
                println!("cell {i}: failed ({e})");
            }
        }
        write_json(&manifest_path, &summaries)?;
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, report) in reports.iter().enumerate() {
        if let Some(r) = report {
            let score = r.best_val_spearman.unwrap_or(f64::NEG_INFINITY);
            if best.map(|(_, s)| score > s).unwrap_or(true) {
                best = Some((i, score));
            }
        }
    }
    let Some((winner, _)) = best else {
        let details: Vec<String> = summaries
            .iter()
            .map(|s| format!("cell {}: {}", s.index, s.error.as_deref().unwrap_or("failed")))
            .collect();
        bail!("every grid cell failed:\n{}", details.join("\n"));
    };
    let report = reports[winner].as_ref().unwrap();
    write_json(&args.out.join("report.json"), report)?;
    report.checkpoint.save(&args.out.join("checkpoint.json"))?;
    write_json(&args.out.join("stats.json"), &stats)?;
    println!(
        "best cell {winner} of {}: validation spearman {}",
        cells.len(),
        spearman_text(report.best_val_spearman)
    );
    Ok(())
}
