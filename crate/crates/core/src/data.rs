//! Probe-array input/output, intensity normalization, robust positive
//! labeling, and synthetic planted-motif data generation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoding::DnaSequence;
use crate::error::{Error, Result};
use crate::seeding::{stream_rng, STREAM_DATA};
use crate::tensor::Tensor;

/// One probe: a sequence and its measured signal, plus the normalized value
/// once normalization has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sequence: DnaSequence,
    pub raw_intensity: f64,
    pub normalized_intensity: Option<f64>,
}

/// Which transform the normalization statistics were fitted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    ZScore,
    LogZScore,
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "zscore" => Ok(NormKind::ZScore),
            "logzscore" => Ok(NormKind::LogZScore),
            other => Err(Error::arg(
                "norm_kind",
                format!("unknown normalization '{other}', expected zscore or log-zscore"),
            )),
        }
    }
}

/// Fitted normalization parameters (population mean and standard deviation
/// of the transformed intensities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub kind: NormKind,
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Maps one raw intensity to its normalized value.
    pub fn transform(&self, raw: f64) -> f64 {
        let x = match self.kind {
            NormKind::ZScore => raw,
            NormKind::LogZScore => raw.ln(),
        };
        (x - self.mean) / self.std
    }
}

/// A labeled collection of probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbmArray {
    pub label: String,
    pub probes: Vec<Probe>,
    /// Statistics the probes' `normalized_intensity` values were produced
    /// with, if normalization has been applied.
    pub normalization: Option<NormStats>,
}

impl PbmArray {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn raw_intensities(&self) -> Vec<f64> {
        self.probes.iter().map(|p| p.raw_intensity).collect()
    }

    /// Normalized intensities; errors if normalization has not been applied.
    pub fn normalized_intensities(&self) -> Result<Vec<f64>> {
        self.probes
            .iter()
            .map(|p| {
                p.normalized_intensity.ok_or_else(|| {
                    Error::arg("normalized_intensities", "array has not been normalized")
                })
            })
            .collect()
    }
}

/// Column layout and header handling for tabular probe files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatHints {
    /// Field delimiter (default: tab).
    pub delimiter: char,
    /// Zero-based column holding the sequence.
    pub sequence_column: usize,
    /// Zero-based column holding the signal.
    pub signal_column: usize,
    /// `Some(true)` = first row is a header, `Some(false)` = first row is
    /// data, `None` = auto-detect (a first row whose signal cell does not
    /// parse as a number is treated as a header).
    pub header: Option<bool>,
}

impl Default for FormatHints {
    fn default() -> Self {
        FormatHints { delimiter: '\t', sequence_column: 0, signal_column: 1, header: None }
    }
}

/// What happened while loading a probe file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Non-empty rows seen, including any header.
    pub rows: usize,
    pub loaded: usize,
    pub skipped: usize,
    pub header_skipped: bool,
    /// Up to the first 20 skipped rows as (1-based line number, reason).
    pub skipped_detail: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

/// Typical probe-array size range; counts outside it produce a warning.
pub const TYPICAL_PROBE_RANGE: (usize, usize) = (1_000, 100_000);

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn parse_row<'a>(line: &'a str, hints: &FormatHints) -> std::result::Result<(&'a str, &'a str), String> {
    let fields: Vec<&str> = line.split(hints.delimiter).collect();
    let need = hints.sequence_column.max(hints.signal_column);
    if fields.len() <= need {
        return Err(format!("expected at least {} columns, found {}", need + 1, fields.len()));
    }
    Ok((fields[hints.sequence_column].trim(), fields[hints.signal_column].trim()))
}

/// Loads a delimited probe file (gzip-transparent by `.gz` extension).
/// Malformed rows are skipped and counted rather than aborting the load;
/// a file with zero usable rows is an error.
pub fn load_pbm(path: impl AsRef<Path>, hints: &FormatHints) -> Result<(PbmArray, LoadReport)> {
    let path = path.as_ref();
    let reader = open_reader(path)?;
    let mut report = LoadReport::default();
    let mut probes = Vec::new();
    let mut first_data_row_seen = false;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        report.rows += 1;

        if !first_data_row_seen {
            first_data_row_seen = true;
            let treat_as_header = match hints.header {
                Some(h) => h,
                None => match parse_row(line, hints) {
                    Ok((_, signal)) => signal.parse::<f64>().is_err(),
                    Err(_) => true,
                },
            };
            if treat_as_header {
                report.header_skipped = true;
                continue;
            }
        }

        let reason = match parse_row(line, hints) {
            Err(r) => Some(r),
            Ok((seq_cell, signal_cell)) => match signal_cell.parse::<f64>() {
                Err(_) => Some(format!("signal '{signal_cell}' is not a number")),
                Ok(signal) if !signal.is_finite() => {
                    Some(format!("signal '{signal_cell}' is not finite"))
                }
                Ok(signal) => match seq_cell.parse::<DnaSequence>() {
                    Err(e) => Some(e.to_string()),
                    Ok(sequence) => {
                        probes.push(Probe {
                            sequence,
                            raw_intensity: signal,
                            normalized_intensity: None,
                        });
                        None
                    }
                },
            },
        };
        if let Some(reason) = reason {
            report.skipped += 1;
            if report.skipped_detail.len() < 20 {
                report.skipped_detail.push((line_no, reason));
            }
        }
    }

    if probes.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: report.rows,
            details: "no usable probe rows".into(),
        });
    }
    report.loaded = probes.len();
    let (lo, hi) = TYPICAL_PROBE_RANGE;
    if probes.len() < lo || probes.len() > hi {
        report
            .warnings
            .push(format!("probe count {} outside typical range [{lo}, {hi}]", probes.len()));
    }

    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "array".into());
    Ok((PbmArray { label, probes, normalization: None }, report))
}

/// Writes `sequence<TAB>signal` rows (plus a header) losslessly: the shortest
/// round-trip decimal form of each raw intensity is used, and `.gz` paths are
/// gzip-compressed.
pub fn write_tsv(array: &PbmArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out: Box<dyn Write> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(BufWriter::new(flate2::write::GzEncoder::new(
            file,
            flate2::Compression::default(),
        )))
    } else {
        Box::new(BufWriter::new(file))
    };
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "sequence\tsignal")?;
        for p in &array.probes {
            writeln!(out, "{}\t{}", p.sequence, p.raw_intensity)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Fits population mean/std of the (optionally log-transformed) values.
pub fn fit_stats(values: &[f64], kind: NormKind) -> Result<NormStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput { op: "fit_stats" });
    }
    let transformed: Vec<f64> = match kind {
        NormKind::ZScore => values.to_vec(),
        NormKind::LogZScore => {
            for (i, &v) in values.iter().enumerate() {
                if v <= 0.0 {
                    return Err(Error::arg(
                        "fit_stats",
                        format!("log normalization needs positive values, got {v} at index {i}"),
                    ));
                }
            }
            values.iter().map(|v| v.ln()).collect()
        }
    };
    for (i, &v) in transformed.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::arg("fit_stats", format!("value at index {i} is {v}")));
        }
    }
    let n = transformed.len() as f64;
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 0.0 || !std.is_finite() {
        return Err(Error::degenerate("fit_stats", "values are constant; std is zero"));
    }
    Ok(NormStats { kind, mean, std })
}

/// Fits stats on an array's raw intensities.
pub fn fit_array_stats(array: &PbmArray, kind: NormKind) -> Result<NormStats> {
    fit_stats(&array.raw_intensities(), kind)
}

/// Applies the given statistics, returning a new array with
/// `normalized_intensity` filled in. The input is not modified.
pub fn normalize(array: &PbmArray, stats: &NormStats) -> PbmArray {
    let probes = array
        .probes
        .iter()
        .map(|p| Probe {
            sequence: p.sequence.clone(),
            raw_intensity: p.raw_intensity,
            normalized_intensity: Some(stats.transform(p.raw_intensity)),
        })
        .collect();
    PbmArray { label: array.label.clone(), probes, normalization: Some(*stats) }
}

/// Fits on the array's own intensities and applies in one step.
pub fn normalize_self_fit(array: &PbmArray, kind: NormKind) -> Result<(PbmArray, NormStats)> {
    let stats = fit_array_stats(array, kind)?;
    Ok((normalize(array, &stats), stats))
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// Consistency factor that makes the median absolute deviation estimate the
/// standard deviation of a normal distribution.
pub const MAD_NORMAL_CONSISTENCY: f64 = 0.6745;

/// Robust location/scale and the positive-label cutoff:
/// median, sigma = MAD / 0.6745, threshold = median + 4 * sigma.
pub fn robust_threshold(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput { op: "robust_threshold" });
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::arg("robust_threshold", format!("value at index {i} is {v}")));
        }
    }
    let m = median(values);
    let deviations: Vec<f64> = values.iter().map(|&v| (v - m).abs()).collect();
    let sigma = median(&deviations) / MAD_NORMAL_CONSISTENCY;
    Ok((m, sigma, m + 4.0 * sigma))
}

/// Marks values strictly above the robust threshold as positive.
pub fn positive_labels(values: &[f64]) -> Result<Vec<bool>> {
    let (_, _, threshold) = robust_threshold(values)?;
    Ok(values.iter().map(|&v| v > threshold).collect())
}

/// Labels an array's probes, preferring normalized intensities when present.
pub fn array_positive_labels(array: &PbmArray) -> Result<Vec<bool>> {
    match array.normalized_intensities() {
        Ok(values) => positive_labels(&values),
        Err(_) => positive_labels(&array.raw_intensities()),
    }
}

/// Parameters for planted-motif synthetic data. The position weight matrix
/// holds per-base, per-position scores in a `[4, w]` tensor (rows in the
/// fixed ACGT order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub pwm: Tensor,
    pub probe_count: usize,
    pub probe_length: usize,
    /// Standard deviation of additive Gaussian intensity noise; 0 = clean.
    pub noise_sd: f64,
    /// Probability that a probe has the motif planted.
    pub planted_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn motif_len(&self) -> usize {
        self.pwm.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.pwm.shape();
        if shape.len() != 2 || shape[0] != 4 || shape[1] == 0 {
            return Err(Error::shape(
                "synthetic_spec",
                format!("pwm must be [4, w] with w >= 1, got {shape:?}"),
            ));
        }
        for &v in self.pwm.data() {
            if !v.is_finite() {
                return Err(Error::arg("synthetic_spec", format!("pwm contains {v}")));
            }
        }
        if self.probe_count == 0 {
            return Err(Error::arg("synthetic_spec", "probe_count must be positive"));
        }
        if self.probe_length < shape[1] {
            return Err(Error::arg(
                "synthetic_spec",
                format!(
                    "probe_length {} is shorter than motif width {}",
                    self.probe_length, shape[1]
                ),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::arg(
                "synthetic_spec",
                format!("noise_sd must be finite and >= 0, got {}", self.noise_sd),
            ));
        }
        if !(0.0..=1.0).contains(&self.planted_fraction) {
            return Err(Error::arg(
                "synthetic_spec",
                format!("planted_fraction must lie in [0, 1], got {}", self.planted_fraction),
            ));
        }
        Ok(())
    }
}

/// Score of one window: sum of per-position base scores. An `N` contributes
/// the average of its column, matching its uniform one-hot encoding.
fn window_score(pwm: &Tensor, bases: &[u8], offset: usize) -> f64 {
    let w = pwm.shape()[1];
    let mut total = 0.0;
    for t in 0..w {
        let b = bases[offset + t];
        if b == 4 {
            total += (0..4).map(|r| pwm.at2(r, t)).sum::<f64>() / 4.0;
        } else {
            total += pwm.at2(b as usize, t);
        }
    }
    total
}

fn base_codes(seq: &DnaSequence) -> Vec<u8> {
    seq.as_str()
        .bytes()
        .map(|b| match b {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            b'T' => 3,
            _ => 4,
        })
        .collect()
}

/// Best (maximum) window score over all offsets, with the first offset
/// winning ties. Errors if the sequence is shorter than the motif.
pub fn best_window_score(pwm: &Tensor, seq: &DnaSequence) -> Result<(f64, usize)> {
    let w = pwm.shape()[1];
    let bases = base_codes(seq);
    if bases.len() < w {
        return Err(Error::arg(
            "best_window_score",
            format!("sequence length {} is shorter than motif width {w}", bases.len()),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_offset = 0;
    for offset in 0..=bases.len() - w {
        let s = window_score(pwm, &bases, offset);
        if s > best {
            best = s;
            best_offset = offset;
        }
    }
    Ok((best, best_offset))
}

const BASE_BYTES: [u8; 4] = [b'A', b'C', b'G', b'T'];

/// Samples a base index from the softmax of one PWM column.
fn softmax_sample(pwm: &Tensor, col: usize, rng: &mut impl Rng) -> usize {
    let mut mx = f64::NEG_INFINITY;
    for r in 0..4 {
        mx = mx.max(pwm.at2(r, col));
    }
    let mut probs = [0.0; 4];
    let mut total = 0.0;
    for r in 0..4 {
        probs[r] = (pwm.at2(r, col) - mx).exp();
        total += probs[r];
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (r, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return r;
        }
    }
    3
}

/// Generates probes where the clean intensity of each probe's best-scoring
/// window is multiplied by `weight(best_offset, n_offsets)` before noise is
/// added. `weight` identically 1.0 gives the plain planted-motif generator.
///
/// Per-probe draw order (fixed for reproducibility): probe_length uniform
/// base draws, one plant coin, then if planted one offset draw plus w
/// softmax base draws, then one Gaussian draw only when noise_sd > 0.
pub fn generate_weighted(
    spec: &SyntheticSpec,
    weight: impl Fn(usize, usize) -> f64,
) -> Result<PbmArray> {
    spec.validate()?;
    let w = spec.motif_len();
    let length = spec.probe_length;
    let n_offsets = length - w + 1;
    let mut rng = stream_rng(spec.seed, STREAM_DATA);
    let noise = if spec.noise_sd > 0.0 {
        Some(Normal::new(0.0, spec.noise_sd).map_err(|e| Error::arg("generate", e.to_string()))?)
    } else {
        None
    };

    let mut probes = Vec::with_capacity(spec.probe_count);
    for _ in 0..spec.probe_count {
        let mut bases: Vec<u8> = (0..length).map(|_| rng.random_range(0..4u8)).collect();
        let planted = rng.random::<f64>() < spec.planted_fraction;
        if planted {
            let offset = rng.random_range(0..n_offsets);
            for t in 0..w {
                bases[offset + t] = softmax_sample(&spec.pwm, t, &mut rng) as u8;
            }
        }
        let seq_bytes: Vec<u8> = bases.iter().map(|&b| BASE_BYTES[b as usize]).collect();
        let sequence: DnaSequence = String::from_utf8(seq_bytes)
            .expect("generated bases are valid ASCII")
            .parse()?;

        let mut best = f64::NEG_INFINITY;
        let mut best_offset = 0;
        for offset in 0..n_offsets {
            let s = window_score(&spec.pwm, &bases, offset);
            if s > best {
                best = s;
                best_offset = offset;
            }
        }
        let mut intensity = best * weight(best_offset, n_offsets);
        if let Some(dist) = &noise {
            intensity += dist.sample(&mut rng);
        }
        probes.push(Probe { sequence, raw_intensity: intensity, normalized_intensity: None });
    }
    Ok(PbmArray {
        label: format!("synthetic-seed{}", spec.seed),
        probes,
        normalization: None,
    })
}

/// Planted-motif generator: uniform background, motif planted with the given
/// probability at a uniform offset, intensity = best window score + noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PbmArray> {
    generate_weighted(spec, |_, _| 1.0)
}
