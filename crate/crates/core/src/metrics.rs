//! Rank-based evaluation: Spearman correlation, ROC/AUC with tied-score
//! handling, true-positive rate at a false-positive-rate budget, predicted
//! ranks of top measured positives, and scatter regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(op: &'static str, name: &str, xs: &[f64]) -> Result<()> {
    for (i, v) in xs.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::arg(op, format!("{name}[{i}] is {v}, expected finite")));
        }
    }
    Ok(())
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// 1-based ranks with tied values receiving the average (fractional) rank of
/// their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation: Pearson correlation of the average-rank
/// vectors. Rejects length mismatch, n < 2, non-finite values, and constant
/// input on either side (the coefficient is undefined there).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(
            "spearman",
            format!("lengths differ: {} vs {}", x.len(), y.len()),
        ));
    }
    if x.len() < 2 {
        return Err(Error::arg("spearman", format!("need at least 2 pairs, got {}", x.len())));
    }
    check_finite("spearman", "x", x)?;
    check_finite("spearman", "y", y)?;
    if is_constant(x) {
        return Err(Error::degenerate("spearman", "x is constant; ranking undefined"));
    }
    if is_constant(y) {
        return Err(Error::degenerate("spearman", "y is constant; ranking undefined"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    Ok(pearson(&rx, &ry))
}

/// Receiver operating characteristic curve. Points run from (0, 0) to (1, 1)
/// with both coordinates nondecreasing; tied scores move diagonally in one
/// step. `auc` is the trapezoidal area, which equals the Mann-Whitney
/// probability (concordant + half-tied pair fraction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct score values in descending order.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "roc",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    check_finite("roc", "scores", scores)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate(
            "roc",
            format!("need both classes, got {pos} positive and {neg} negative"),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    // Pair-counting accumulator: concordant pairs plus half the tied pairs,
    // kept in exact integer halves so the trapezoid identity holds to the bit.
    let mut auc_num_halves = 0u64; // counts of half-pairs (pair = 2 halves)
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mut group_tp = 0u64;
        let mut group_fp = 0u64;
        for &k in &idx[i..=j] {
            if labels[k] {
                group_tp += 1;
            } else {
                group_fp += 1;
            }
        }
        // Negatives in this group pair with: every positive above the group
        // (concordant, 2 halves each) and every positive inside it (tied,
        // 1 half each).
        auc_num_halves += group_fp * (2 * tp + group_tp);
        tp += group_tp;
        fp += group_fp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j + 1;
    }
    let auc = auc_num_halves as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auc })
}

/// Step-function reading of the curve: the TPR at the largest achieved FPR
/// that does not exceed `fpr_target`. No interpolation between points.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_target: f64) -> Result<f64> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::arg(
            "tpr_at_fpr",
            format!("fpr_target must lie strictly inside (0, 1), got {fpr_target}"),
        ));
    }
    let mut best = 0.0;
    for &(fpr, tpr) in &curve.points {
        if fpr <= fpr_target && tpr > best {
            best = tpr;
        }
    }
    Ok(best)
}

/// Predicted ranks of the strongest measured positives: distinct integers,
/// 1 = highest predicted score, ties broken by original index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankChart {
    /// Rank under the predictions for each selected probe, in order of
    /// decreasing measured intensity.
    pub ranks: Vec<usize>,
    /// Total number of probes ranked against.
    pub total: usize,
}

/// Selects the `k` positive-labeled probes with the highest measured
/// intensity (ties by original index) and reports each one's rank under the
/// predicted scores.
pub fn rank_chart(
    predicted: &[f64],
    measured: &[f64],
    labels: &[bool],
    k: usize,
) -> Result<RankChart> {
    let n = predicted.len();
    if measured.len() != n || labels.len() != n {
        return Err(Error::shape(
            "rank_chart",
            format!("{} predicted vs {} measured vs {} labels", n, measured.len(), labels.len()),
        ));
    }
    if k == 0 {
        return Err(Error::arg("rank_chart", "k must be positive"));
    }
    check_finite("rank_chart", "predicted", predicted)?;
    check_finite("rank_chart", "measured", measured)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives < k {
        return Err(Error::arg(
            "rank_chart",
            format!("need at least k={k} positives, found {positives}"),
        ));
    }

    // Rank of every probe under the predictions (1 = highest).
    let mut by_pred: Vec<usize> = (0..n).collect();
    by_pred.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]).then(a.cmp(&b)));
    let mut pred_rank = vec![0usize; n];
    for (pos, &i) in by_pred.iter().enumerate() {
        pred_rank[i] = pos + 1;
    }

    let mut pos_idx: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    pos_idx.sort_by(|&a, &b| measured[b].total_cmp(&measured[a]).then(a.cmp(&b)));
    let ranks = pos_idx[..k].iter().map(|&i| pred_rank[i]).collect();
    Ok(RankChart { ranks, total: n })
}

/// Ordinary least squares of measured on predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterFit {
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn scatter_with_regression(predicted: &[f64], measured: &[f64]) -> Result<ScatterFit> {
    let n = predicted.len();
    if measured.len() != n {
        return Err(Error::shape(
            "scatter_with_regression",
            format!("{} predicted vs {} measured", n, measured.len()),
        ));
    }
    if n < 2 {
        return Err(Error::arg(
            "scatter_with_regression",
            format!("need at least 2 pairs, got {n}"),
        ));
    }
    check_finite("scatter_with_regression", "predicted", predicted)?;
    check_finite("scatter_with_regression", "measured", measured)?;
    if is_constant(predicted) {
        return Err(Error::degenerate(
            "scatter_with_regression",
            "predicted values are constant; slope undefined",
        ));
    }
    let mp = predicted.iter().sum::<f64>() / n as f64;
    let mm = measured.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&p, &m) in predicted.iter().zip(measured) {
        sxy += (p - mp) * (m - mm);
        sxx += (p - mp) * (p - mp);
    }
    let slope = sxy / sxx;
    let intercept = mm - slope * mp;
    Ok(ScatterFit {
        pairs: predicted.iter().copied().zip(measured.iter().copied()).collect(),
        slope,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Definition-level reference implementations, deliberately O(n^2) and
    // shortcut-free, used to cross-check the production code.

    fn brute_ranks(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let smaller = xs.iter().filter(|&&o| o < x).count();
                let equal = xs.iter().filter(|&&o| o == x).count();
                // Average of positions smaller+1 ..= smaller+equal.
                (2 * smaller + equal + 1) as f64 / 2.0
            })
            .collect()
    }

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12, "{r}");
    }

    #[test]
    fn spearman_rejections() {
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_err());
        assert!(spearman(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn ranks_match_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..300 {
            let n = rng.random_range(2..60);
            // Small integer support forces plenty of ties.
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
            assert_eq!(average_ranks(&xs), brute_ranks(&xs));
        }
    }

    #[test]
    fn spearman_invariance_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(3..50);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let base = spearman(&x, &y).unwrap();
            assert!((-1.0..=1.0).contains(&base));
            // Symmetric in its arguments.
            assert!((spearman(&y, &x).unwrap() - base).abs() < 1e-12);
            // Invariant under strictly increasing maps of either side.
            let x2: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
            let y2: Vec<f64> = y.iter().map(|&v| 3.0 * v + 11.0).collect();
            assert!((spearman(&x2, &y).unwrap() - base).abs() < 1e-12);
            assert!((spearman(&x, &y2).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_examples() {
        let perfect = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        assert_eq!(perfect.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(perfect.points.last(), Some(&(1.0, 1.0)));
        assert!(perfect.points.contains(&(0.0, 1.0)));

        let mixed = roc(&[0.9, 0.8, 0.2, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(mixed.auc, 0.75);

        let tied = roc(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]).unwrap();
        assert_eq!(tied.auc, 0.5);
        // All scores equal: one diagonal segment.
        assert_eq!(tied.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn roc_rejects_single_class() {
        assert!(roc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn roc_curve_is_monotone_and_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..200 {
            let n = rng.random_range(2..100);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 3.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let curve = roc(&scores, &labels).unwrap();
            for w in curve.points.windows(2) {
                assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            let brute = brute_auc(&scores, &labels);
            assert!((curve.auc - brute).abs() < 1e-12, "{} vs {brute}", curve.auc);

            // AUC is invariant under strictly increasing score transforms.
            let transformed: Vec<f64> = scores.iter().map(|&s| (s + 1.0).ln() * 2.0).collect();
            let curve2 = roc(&transformed, &labels).unwrap();
            assert!((curve2.auc - curve.auc).abs() < 1e-12);
        }
    }

    #[test]
    fn tpr_at_fpr_examples() {
        let perfect = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(tpr_at_fpr(&perfect, 0.01).unwrap(), 1.0);

        let hand = RocCurve {
            points: vec![(0.0, 0.0), (0.005, 0.3), (0.02, 0.6), (1.0, 1.0)],
            auc: 0.0,
        };
        assert_eq!(tpr_at_fpr(&hand, 0.01).unwrap(), 0.3);

        assert!(tpr_at_fpr(&hand, 0.0).is_err());
        assert!(tpr_at_fpr(&hand, 1.0).is_err());
    }

    #[test]
    fn tpr_at_fpr_is_monotone_in_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let scores: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| s + rng.random_range(-1.0..1.0) > 0.0).collect();
        let curve = roc(&scores, &labels).unwrap();
        let mut prev = 0.0;
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let v = tpr_at_fpr(&curve, t).unwrap();
            assert!(v >= prev, "target {t}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn rank_chart_perfect_and_anti_predictor() {
        let n = 50;
        let measured: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let labels: Vec<bool> = measured.iter().map(|&m| m >= 40.0).collect();
        let k = 10;

        let chart = rank_chart(&measured, &measured, &labels, k).unwrap();
        let mut sorted = chart.ranks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=k).collect::<Vec<_>>());

        let anti: Vec<f64> = measured.iter().map(|&m| -m).collect();
        let chart = rank_chart(&anti, &measured, &labels, k).unwrap();
        let mut sorted = chart.ranks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (n - k + 1..=n).collect::<Vec<_>>());
    }

    #[test]
    fn rank_chart_random_predictor_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let n = 1000;
        let k = 100;
        let measured: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let predicted: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| measured[b].total_cmp(&measured[a]));
        let mut labels = vec![false; n];
        for &i in &idx[..200] {
            labels[i] = true;
        }
        let chart = rank_chart(&predicted, &measured, &labels, k).unwrap();
        assert_eq!(chart.ranks.len(), k);
        let mean = chart.ranks.iter().sum::<usize>() as f64 / k as f64;
        assert!((400.0..=600.0).contains(&mean), "mean rank {mean}");
    }

    #[test]
    fn rank_chart_ranks_are_distinct_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..50 {
            let n = rng.random_range(10..200);
            // Heavy ties in both axes.
            let predicted: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let measured: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            let k = positives.min(7);
            let chart = rank_chart(&predicted, &measured, &labels, k).unwrap();
            let mut seen = std::collections::HashSet::new();
            for &r in &chart.ranks {
                assert!((1..=n).contains(&r));
                assert!(seen.insert(r), "duplicate rank {r}");
            }
        }
    }

    #[test]
    fn rank_chart_rejects_too_few_positives() {
        let err = rank_chart(&[1.0, 2.0], &[1.0, 2.0], &[true, false], 2).unwrap_err();
        assert!(err.to_string().contains("positives"), "{err}");
    }

    #[test]
    fn scatter_fit_examples() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        let fit = scatter_with_regression(&xs, &xs).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);

        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 * x + 3.0).collect();
        let fit = scatter_with_regression(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert_eq!(fit.pairs.len(), 4);
        assert_eq!(fit.pairs[0], (1.0, 5.0));
    }

    #[test]
    fn scatter_residuals_orthogonal_to_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..50 {
            let n = rng.random_range(5..100);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m: Vec<f64> = p
                .iter()
                .map(|&v| 0.7 * v - 1.3 + rng.random_range(-0.5..0.5))
                .collect();
            let fit = scatter_with_regression(&p, &m).unwrap();
            let dot: f64 = p
                .iter()
                .zip(&m)
                .map(|(&x, &y)| (y - fit.slope * x - fit.intercept) * x)
                .sum();
            assert!(dot.abs() < 1e-9, "residual dot {dot}");
        }
    }

    #[test]
    fn scatter_rejects_constant_predictor() {
        assert!(scatter_with_regression(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
