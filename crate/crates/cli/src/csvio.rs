//! Readers for the metric CSVs this tool writes, with header diagnostics
//! precise enough to act on.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::args::PlotKind;

pub const ROC_HEADER: &str = "fpr,tpr";
pub const SCATTER_HEADER: &str = "predicted,measured";
pub const RANK_HEADER: &str = "positive_rank,predicted_rank";

#[derive(Debug)]
pub enum ParsedCsv {
    Roc(Vec<(f64, f64)>),
    Scatter(Vec<(f64, f64)>),
    Rank(Vec<usize>),
}

fn expected_header(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::Roc => ROC_HEADER,
        PlotKind::Scatter => SCATTER_HEADER,
        PlotKind::Rank => RANK_HEADER,
    }
}

fn parse_pair(line: &str, lineno: usize, path: &Path) -> Result<(f64, f64)> {
    let (a, b) = match line.split_once(',') {
        Some(parts) => parts,
        None => bail!("{}:{lineno}: expected two comma-separated values", path.display()),
    };
    let x: f64 = a
        .trim()
        .parse()
        .with_context(|| format!("{}:{lineno}: bad number '{a}'", path.display()))?;
    let y: f64 = b
        .trim()
        .parse()
        .with_context(|| format!("{}:{lineno}: bad number '{b}'", path.display()))?;
    Ok((x, y))
}

/// Reads a metric CSV, inferring the chart kind from the header when `kind`
/// is not forced. Unknown or mismatched headers fail with the expected
/// column names.
pub fn read_metric_csv(path: &Path, kind: Option<PlotKind>) -> Result<ParsedCsv> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = match lines.next() {
        Some(h) => h,
        None => bail!("{}: empty file, expected a CSV header", path.display()),
    };
    let header = header.trim();

    let detected = match header {
        ROC_HEADER => PlotKind::Roc,
        SCATTER_HEADER => PlotKind::Scatter,
        RANK_HEADER => PlotKind::Rank,
        other => {
            if let Some(k) = kind {
                bail!(
                    "{}: bad header '{other}': expected columns '{}'",
                    path.display(),
                    expected_header(k)
                );
            }
            bail!(
                "{}: unrecognized header '{other}': expected columns '{ROC_HEADER}' (roc), \
                 '{SCATTER_HEADER}' (scatter), or '{RANK_HEADER}' (rank chart)",
                path.display()
            );
        }
    };
    if let Some(k) = kind {
        if k != detected {
            bail!(
                "{}: bad header '{header}': expected columns '{}'",
                path.display(),
                expected_header(k)
            );
        }
    }

    match detected {
        PlotKind::Roc => {
            let mut points = Vec::new();
            for (i, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                points.push(parse_pair(line, i + 1, path)?);
            }
            if points.is_empty() {
                bail!("{}: no data rows", path.display());
            }
            Ok(ParsedCsv::Roc(points))
        }
        PlotKind::Scatter => {
            let mut pairs = Vec::new();
            for (i, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                pairs.push(parse_pair(line, i + 1, path)?);
            }
            if pairs.is_empty() {
                bail!("{}: no data rows", path.display());
            }
            Ok(ParsedCsv::Scatter(pairs))
        }
        PlotKind::Rank => {
            let mut ranks = Vec::new();
            for (i, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let (_, rank) = parse_pair(line, i + 1, path)?;
                if rank < 1.0 || rank.fract() != 0.0 {
                    bail!(
                        "{}:{}: predicted_rank must be a positive integer, got '{rank}'",
                        path.display(),
                        i + 1
                    );
                }
                ranks.push(rank as usize);
            }
            if ranks.is_empty() {
                bail!("{}: no data rows", path.display());
            }
            Ok(ParsedCsv::Rank(ranks))
        }
    }
}
