//! `evaluate`, `experiment`, and `plot`: scoring checkpoints, running the
//! full pipeline, and rendering metric CSVs as charts.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use deeperbind_core::{
    encode_set, fit_array_stats, load_pbm, normalize, positive_labels, rank_chart, roc,
    run_experiment, scatter_with_regression, spearman, tpr_at_fpr, write_json,
    write_rank_chart_csv, write_roc_csv, write_scatter_csv, Checkpoint, ExperimentSpec, Model,
    NormStats,
};

use crate::args::{EvaluateArgs, ExperimentArgs, PlotArgs};
use crate::csvio::{read_metric_csv, ParsedCsv};
use crate::svg;

#[derive(Debug, Serialize)]
pub struct EvalMetrics {
    pub spearman: Option<f64>,
    pub auc: Option<f64>,
    pub tpr_at_1pct_fpr: Option<f64>,
    pub probes: usize,
    pub positives: usize,
    pub notes: Vec<String>,
}

fn opt_text(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "undefined".to_string(),
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("checkpoint {}", args.checkpoint.display()))?;
    let model = Model::from_checkpoint(&ck)
        .with_context(|| format!("checkpoint {}", args.checkpoint.display()))?;
    let (array, load_report) = load_pbm(&args.data, &args.format.hints())?;
    for w in &load_report.warnings {
        eprintln!("warning: {w}");
    }

    let mut notes = Vec::new();
    let stats: NormStats = match &args.stats {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("normalization stats {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("normalization stats {}", path.display()))?
        }
        None => {
            notes.push("normalization statistics self-fitted on the evaluation data".into());
            fit_array_stats(&array, args.norm)?
        }
    };
    let set = encode_set(&normalize(&array, &stats))?;
    let mut preds = Vec::with_capacity(set.len());
    for x in &set.inputs {
        preds.push(model.predict_tensor(x)?);
    }
    let labels = positive_labels(&set.targets)?;
    let positives = labels.iter().filter(|&&l| l).count();

    fs::create_dir_all(&args.out).with_context(|| format!("{}", args.out.display()))?;
    let out = |name: &str| args.out.join(name);

    let sp = match spearman(&preds, &set.targets) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("spearman undefined: {e}"));
            None
        }
    };
    let (auc, tpr) = match roc(&preds, &labels) {
        Ok(curve) => {
            let tpr = tpr_at_fpr(&curve, 0.01)?;
            write_roc_csv(&out("roc.csv"), &curve)?;
            fs::write(out("roc.svg"), svg::render_roc(&curve.points, "ROC curve"))
                .with_context(|| format!("{}", out("roc.svg").display()))?;
            (Some(curve.auc), Some(tpr))
        }
        Err(e) => {
            notes.push(format!("roc undefined: {e}"));
            (None, None)
        }
    };
    match scatter_with_regression(&preds, &set.targets) {
        Ok(fit) => {
            write_scatter_csv(&out("scatter.csv"), &fit)?;
            fs::write(
                out("scatter.svg"),
                svg::render_scatter(&fit.pairs, "Predicted vs measured intensity"),
            )
            .with_context(|| format!("{}", out("scatter.svg").display()))?;
        }
        Err(e) => notes.push(format!("scatter regression undefined: {e}")),
    }
    let k = positives.min(100);
    if k > 0 {
        let chart = rank_chart(&preds, &set.targets, &labels, k)?;
        write_rank_chart_csv(&out("rankchart.csv"), &chart)?;
        fs::write(
            out("rankchart.svg"),
            svg::render_rank_chart(&chart.ranks, "Predicted ranks of top measured probes"),
        )
        .with_context(|| format!("{}", out("rankchart.svg").display()))?;
    } else {
        notes.push("no positive probes; rank chart skipped".into());
    }

    let metrics = EvalMetrics {
        spearman: sp,
        auc,
        tpr_at_1pct_fpr: tpr,
        probes: set.len(),
        positives,
        notes,
    };
    write_json(&out("metrics.json"), &metrics)?;
    println!(
        "evaluated {} probes: spearman {}, auc {}, tpr@1%fpr {}",
        metrics.probes,
        opt_text(metrics.spearman),
        opt_text(metrics.auc),
        opt_text(metrics.tpr_at_1pct_fpr)
    );
    Ok(())
}

/// Renders roc/scatter/rankchart SVGs for every CSV a finished experiment
/// wrote under `dir`, returning the relative names of the new files.
pub fn render_model_charts(dir: &Path, kind_label: &str) -> Result<Vec<String>> {
    let mut added = Vec::new();
    let jobs: [(&str, &str, fn(ParsedCsv, &str) -> Option<String>); 3] = [
        ("roc.csv", "roc.svg", |parsed, title| match parsed {
            ParsedCsv::Roc(points) => Some(svg::render_roc(&points, title)),
            _ => None,
        }),
        ("scatter.csv", "scatter.svg", |parsed, title| match parsed {
            ParsedCsv::Scatter(pairs) => Some(svg::render_scatter(&pairs, title)),
            _ => None,
        }),
        ("rankchart.csv", "rankchart.svg", |parsed, title| match parsed {
            ParsedCsv::Rank(ranks) => Some(svg::render_rank_chart(&ranks, title)),
            _ => None,
        }),
    ];
    for (csv_name, svg_name, render) in jobs {
        let csv_path = dir.join(csv_name);
        if !csv_path.exists() {
            continue;
        }
        let parsed = read_metric_csv(&csv_path, None)?;
        let title = match svg_name {
            "roc.svg" => format!("ROC curve ({kind_label})"),
            "scatter.svg" => format!("Predicted vs measured intensity ({kind_label})"),
            _ => format!("Predicted ranks of top measured probes ({kind_label})"),
        };
        if let Some(document) = render(parsed, &title) {
            let svg_path = dir.join(svg_name);
            fs::write(&svg_path, document)
                .with_context(|| format!("{}", svg_path.display()))?;
            added.push(format!("{kind_label}/{svg_name}"));
        }
    }
    Ok(added)
}

pub fn experiment(args: &ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("experiment spec {}", args.spec.display()))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .with_context(|| format!("experiment spec {}", args.spec.display()))?;
    if let Some(out) = &args.out {
        spec.out_dir = out.clone();
    }
    let result = run_experiment(&spec)?;

    // Charts for each model, then fold them into the artifact manifest.
    let mut extra = Vec::new();
    for outcome in &result.models {
        let label = outcome.kind.to_string();
        extra.extend(render_model_charts(&spec.out_dir.join(&label), &label)?);
    }
    let manifest_path = spec.out_dir.join("manifest.json");
    let mut manifest: Vec<String> =
        serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .with_context(|| format!("{}", manifest_path.display()))?;
    manifest.extend(extra);
    manifest.sort();
    write_json(&manifest_path, &manifest)?;

    for outcome in &result.models {
        println!(
            "{}: test spearman {}, auc {}, tpr@1%fpr {}",
            outcome.kind,
            opt_text(outcome.test_spearman),
            opt_text(outcome.test_auc),
            opt_text(outcome.test_tpr_at_1pct_fpr)
        );
    }
    println!("artifacts in {}", spec.out_dir.display());
    Ok(())
}

pub fn plot(args: &PlotArgs) -> Result<()> {
    let parsed = read_metric_csv(&args.input, args.kind)?;
    let document = match parsed {
        ParsedCsv::Roc(points) => {
            svg::render_roc(&points, args.title.as_deref().unwrap_or("ROC curve"))
        }
        ParsedCsv::Scatter(pairs) => svg::render_scatter(
            &pairs,
            args.title.as_deref().unwrap_or("Predicted vs measured intensity"),
        ),
        ParsedCsv::Rank(ranks) => svg::render_rank_chart(
            &ranks,
            args.title.as_deref().unwrap_or("Predicted ranks of top measured probes"),
        ),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("{}", parent.display()))?;
        }
    }
    fs::write(&args.out, document).with_context(|| format!("{}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
