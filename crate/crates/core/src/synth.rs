//! Synthetic sets that exercise what position-blind pooling cannot model:
//! intensities weighted by where the motif sits, and additive contributions
//! from several motifs in one probe.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{best_window_score, generate_weighted, PbmArray, Probe, SyntheticSpec};
use crate::encoding::DnaSequence;
use crate::error::{Error, Result};
use crate::seeding::{stream_rng, STREAM_DATA};
use crate::tensor::Tensor;

/// How the planted motif's position modulates intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionEffect {
    /// Probes with the motif near the center bind more strongly.
    CenterBoost,
    /// Probes with the motif near either end bind more weakly.
    EdgePenalty,
}

/// Multiplicative intensity weight for a window at `offset` out of
/// `n_offsets` possible positions. A raised-cosine bump peaks at the probe
/// center and falls to zero at the ends:
/// center-boost = 1 + magnitude * bump, edge-penalty = 1 - magnitude * (1 - bump).
/// Magnitude 0 gives exactly 1.0 for both.
pub fn positional_weight(
    effect: PositionEffect,
    magnitude: f64,
    offset: usize,
    n_offsets: usize,
) -> f64 {
    let u = if n_offsets <= 1 {
        0.5
    } else {
        offset as f64 / (n_offsets - 1) as f64
    };
    let bump = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos());
    match effect {
        PositionEffect::CenterBoost => 1.0 + magnitude * bump,
        PositionEffect::EdgePenalty => 1.0 - magnitude * (1.0 - bump),
    }
}

/// The intensity rule of the positional dataset for one sequence: best
/// window score times the positional weight of that window's offset.
pub fn positional_intensity(
    pwm: &Tensor,
    seq: &DnaSequence,
    effect: PositionEffect,
    magnitude: f64,
) -> Result<f64> {
    let (score, offset) = best_window_score(pwm, seq)?;
    let n_offsets = seq.len() - pwm.shape()[1] + 1;
    Ok(score * positional_weight(effect, magnitude, offset, n_offsets))
}

/// Planted-motif set whose clean intensity is scaled by where the
/// best-scoring window sits. Magnitude 0 reproduces the plain generator
/// bit for bit.
pub fn make_positional_dataset(
    base: &SyntheticSpec,
    effect: PositionEffect,
    magnitude: f64,
) -> Result<PbmArray> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::arg(
            "make_positional_dataset",
            format!("magnitude must be finite and >= 0, got {magnitude}"),
        ));
    }
    let mut array = generate_weighted(base, |offset, n_offsets| {
        positional_weight(effect, magnitude, offset, n_offsets)
    })?;
    let kind = match effect {
        PositionEffect::CenterBoost => "center-boost",
        PositionEffect::EdgePenalty => "edge-penalty",
    };
    array.label = format!("positional-{kind}-seed{}", base.seed);
    Ok(array)
}

const BASE_BYTES: [u8; 4] = [b'A', b'C', b'G', b'T'];

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

/// Probes carrying every given motif at once, planted left to right without
/// overlap at uniformly drawn feasible offsets. The intensity is the SUM of
/// each motif's best-window score over the whole probe (plus Gaussian noise
/// when `noise_sd` > 0) — the additive regime a single position-blind
/// maximum cannot represent.
pub fn multi_motif_dataset(
    pwms: &[Tensor],
    probe_count: usize,
    probe_length: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<PbmArray> {
    if pwms.is_empty() {
        return Err(Error::EmptyInput { op: "multi_motif_dataset" });
    }
    let mut widths = Vec::with_capacity(pwms.len());
    for (i, pwm) in pwms.iter().enumerate() {
        let shape = pwm.shape();
        if shape.len() != 2 || shape[0] != 4 || shape[1] == 0 {
            return Err(Error::shape(
                "multi_motif_dataset",
                format!("pwm {i} must be [4, w] with w >= 1, got {shape:?}"),
            ));
        }
        for &v in pwm.data() {
            if !v.is_finite() {
                return Err(Error::arg("multi_motif_dataset", format!("pwm {i} contains {v}")));
            }
        }
        widths.push(shape[1]);
    }
    let total_width: usize = widths.iter().sum();
    if total_width > probe_length {
        return Err(Error::arg(
            "multi_motif_dataset",
            format!(
                "motif widths sum to {total_width}, which does not fit in probe length {probe_length}"
            ),
        ));
    }
    if probe_count == 0 {
        return Err(Error::arg("multi_motif_dataset", "probe_count must be positive"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::arg(
            "multi_motif_dataset",
            format!("noise_sd must be finite and >= 0, got {noise_sd}"),
        ));
    }

    let mut rng = stream_rng(seed, STREAM_DATA);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::arg("multi_motif_dataset", e.to_string()))?)
    } else {
        None
    };

    let mut probes = Vec::with_capacity(probe_count);
    for _ in 0..probe_count {
        let mut bases: Vec<u8> = (0..probe_length).map(|_| rng.random_range(0..4u8)).collect();
        // Left-to-right placement: each motif draws an offset between the
        // previous motif's end and the last position leaving room for the
        // rest.
        let mut cursor = 0usize;
        let mut remaining: usize = total_width;
        for (pwm, &w) in pwms.iter().zip(&widths) {
            remaining -= w;
            let max_offset = probe_length - w - remaining;
            let offset = rng.random_range(cursor..=max_offset);
            for t in 0..w {
                bases[offset + t] = softmax_sample(pwm, t, &mut rng) as u8;
            }
            cursor = offset + w;
        }

        let seq_bytes: Vec<u8> = bases.iter().map(|&b| BASE_BYTES[b as usize]).collect();
        let sequence: DnaSequence = String::from_utf8(seq_bytes)
            .expect("generated bases are valid ASCII")
            .parse()?;
        let mut intensity = 0.0;
        for pwm in pwms {
            intensity += best_window_score(pwm, &sequence)?.0;
        }
        if let Some(dist) = &noise {
            intensity += dist.sample(&mut rng);
        }
        probes.push(Probe { sequence, raw_intensity: intensity, normalized_intensity: None });
    }
    Ok(PbmArray { label: format!("multi-motif-seed{seed}"), probes, normalization: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn consensus_pwm(consensus: &str, strength: f64) -> Tensor {
        let w = consensus.len();
        let mut data = vec![0.0; 4 * w];
        for (t, b) in consensus.bytes().enumerate() {
            let row = match b {
                b'A' => 0,
                b'C' => 1,
                b'G' => 2,
                _ => 3,
            };
            data[row * w + t] = strength;
        }
        Tensor::new(vec![4, w], data).unwrap()
    }

    fn base_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            pwm: consensus_pwm("ACGTAC", 4.0),
            probe_count: 150,
            probe_length: 24,
            noise_sd: 0.25,
            planted_fraction: 0.6,
            seed,
        }
    }

    #[test]
    fn zero_magnitude_reproduces_plain_generator() {
        let spec = base_spec(51);
        let plain = generate_synthetic(&spec).unwrap();
        for effect in [PositionEffect::CenterBoost, PositionEffect::EdgePenalty] {
            let weighted = make_positional_dataset(&spec, effect, 0.0).unwrap();
            assert_eq!(weighted.probes, plain.probes);
        }
    }

    #[test]
    fn center_planted_probe_outscores_edge_planted() {
        let pwm = consensus_pwm("ACGT", 5.0);
        // Same motif, same background, planted mid-probe vs at the 5' end.
        let center: DnaSequence = "GGGGGGACGTGGGGGG".parse().unwrap();
        let edge: DnaSequence = "ACGTGGGGGGGGGGGG".parse().unwrap();
        let ci = positional_intensity(&pwm, &center, PositionEffect::CenterBoost, 1.0).unwrap();
        let ei = positional_intensity(&pwm, &edge, PositionEffect::CenterBoost, 1.0).unwrap();
        assert!(ci > ei, "center {ci} vs edge {ei}");

        // Edge penalty: the edge-planted probe is suppressed below its
        // unweighted score, the centered one is not.
        let ci = positional_intensity(&pwm, &center, PositionEffect::EdgePenalty, 0.8).unwrap();
        let ei = positional_intensity(&pwm, &edge, PositionEffect::EdgePenalty, 0.8).unwrap();
        assert!(ci > ei, "center {ci} vs edge {ei}");
        assert!(ei < 20.0, "edge score should be suppressed, got {ei}");
    }

    #[test]
    fn positional_weight_shape() {
        let n = 21;
        let center = positional_weight(PositionEffect::CenterBoost, 1.0, 10, n);
        let edge0 = positional_weight(PositionEffect::CenterBoost, 1.0, 0, n);
        let edge_last = positional_weight(PositionEffect::CenterBoost, 1.0, n - 1, n);
        assert!((center - 2.0).abs() < 1e-12);
        assert!((edge0 - 1.0).abs() < 1e-12);
        assert!((edge_last - 1.0).abs() < 1e-12);

        let pen_center = positional_weight(PositionEffect::EdgePenalty, 0.5, 10, n);
        let pen_edge = positional_weight(PositionEffect::EdgePenalty, 0.5, 0, n);
        assert!((pen_center - 1.0).abs() < 1e-12);
        assert!((pen_edge - 0.5).abs() < 1e-12);

        // Single-offset probes sit at the bump's center.
        assert!((positional_weight(PositionEffect::CenterBoost, 1.0, 0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn positional_dataset_is_deterministic() {
        let spec = base_spec(52);
        let a = make_positional_dataset(&spec, PositionEffect::CenterBoost, 1.0).unwrap();
        let b = make_positional_dataset(&spec, PositionEffect::CenterBoost, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(make_positional_dataset(&spec, PositionEffect::CenterBoost, -0.1).is_err());
    }

    #[test]
    fn positional_intensities_follow_the_weight_rule() {
        let mut spec = base_spec(53);
        spec.noise_sd = 0.0;
        spec.planted_fraction = 1.0;
        let array = make_positional_dataset(&spec, PositionEffect::CenterBoost, 1.5).unwrap();
        for p in &array.probes {
            let expected =
                positional_intensity(&spec.pwm, &p.sequence, PositionEffect::CenterBoost, 1.5)
                    .unwrap();
            assert_eq!(p.raw_intensity.to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn single_motif_reduces_to_plain_semantics() {
        let pwm = consensus_pwm("ACGTAC", 4.0);
        let array = multi_motif_dataset(&[pwm.clone()], 120, 24, 0.0, 54).unwrap();
        for p in &array.probes {
            let (score, _) = best_window_score(&pwm, &p.sequence).unwrap();
            assert_eq!(p.raw_intensity.to_bits(), score.to_bits());
        }
    }

    #[test]
    fn two_motif_intensity_is_the_exact_sum() {
        let a = consensus_pwm("AAAA", 5.0);
        let c = consensus_pwm("CCCC", 5.0);
        let array = multi_motif_dataset(&[a.clone(), c.clone()], 150, 30, 0.0, 55).unwrap();
        let mut mean_a = 0.0;
        let mut mean_c = 0.0;
        for p in &array.probes {
            let sa = best_window_score(&a, &p.sequence).unwrap().0;
            let sc = best_window_score(&c, &p.sequence).unwrap().0;
            assert_eq!(p.raw_intensity.to_bits(), (sa + sc).to_bits());
            mean_a += sa;
            mean_c += sc;
        }
        // Both motifs are planted in every probe, so the average best-window
        // scores sit near the consensus score of 20 (background-only windows
        // of width 4 average far less).
        mean_a /= array.probes.len() as f64;
        mean_c /= array.probes.len() as f64;
        assert!(mean_a > 17.0 && mean_c > 17.0, "means {mean_a}, {mean_c}");
    }

    #[test]
    fn infeasible_placement_is_rejected() {
        let a = consensus_pwm("AAAAAAAA", 2.0);
        let b = consensus_pwm("CCCCCCCC", 2.0);
        let err = multi_motif_dataset(&[a.clone(), b.clone()], 10, 15, 0.0, 0).unwrap_err();
        assert!(err.to_string().contains("fit"), "{err}");
        // Exactly fitting is allowed.
        multi_motif_dataset(&[a, b], 10, 16, 0.0, 0).unwrap();
    }

    #[test]
    fn multi_motif_rejections_and_determinism() {
        assert!(multi_motif_dataset(&[], 10, 20, 0.0, 0).is_err());
        let pwm = consensus_pwm("ACGT", 3.0);
        assert!(multi_motif_dataset(&[pwm.clone()], 0, 20, 0.0, 0).is_err());
        assert!(multi_motif_dataset(&[pwm.clone()], 10, 20, -1.0, 0).is_err());
        assert!(multi_motif_dataset(&[Tensor::zeros(vec![3, 4])], 10, 20, 0.0, 0).is_err());

        let x = multi_motif_dataset(&[pwm.clone()], 40, 20, 0.4, 9).unwrap();
        let y = multi_motif_dataset(&[pwm.clone()], 40, 20, 0.4, 9).unwrap();
        assert_eq!(x, y);
        let z = multi_motif_dataset(&[pwm], 40, 20, 0.4, 10).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn motifs_are_planted_without_overlap() {
        // With maximal total width the offsets are forced: motif 1 at 0,
        // motif 2 right after it.
        let a = consensus_pwm("AAAAA", 50.0);
        let c = consensus_pwm("CCCCC", 50.0);
        let array = multi_motif_dataset(&[a, c], 50, 10, 0.0, 56).unwrap();
        for p in &array.probes {
            // Softmax at strength 50 makes consensus draws essentially sure.
            assert_eq!(p.sequence.as_str(), "AAAAACCCCC");
        }
    }
}
