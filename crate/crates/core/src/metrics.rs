//! Detection and calibration metrics.
//!
//! Detection metrics consume two score sets under one orientation: higher
//! score means more in-distribution. All of them are rank statistics, so any
//! strictly increasing transform of the scores leaves them unchanged; the
//! test suite checks each against a brute-force oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{argmax_rows, Matrix};

/// One scored example with its ground-truth membership.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DetectionSample {
    pub score: f64,
    pub is_in_distribution: bool,
}

fn check_nonempty(context: &'static str, id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::contract(format!(
            "{context}: both score sets must be non-empty"
        )));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
    v
}

/// Area under the ROC curve in its Mann-Whitney form: the probability that a
/// random ID score ranks above a random OOD score, ties counting one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_nonempty("auroc", id_scores, ood_scores)?;
    let bi = id_scores.len();
    let bo = ood_scores.len();

    // average ranks over the combined sample, tie groups share their mean rank
    let mut combined: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    combined.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));

    let mut id_rank_sum = 0.0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        while j < combined.len() && combined[j].0 == combined[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for item in &combined[i..j] {
            if item.1 {
                id_rank_sum += avg_rank;
            }
        }
        i = j;
    }

    let u = id_rank_sum - (bi * (bi + 1)) as f64 / 2.0;
    Ok(u / (bi as f64 * bo as f64))
}

/// Area under the precision-recall curve with ID as the positive class, by
/// step interpolation over unique thresholds in descending score order.
pub fn aupr(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_nonempty("aupr", id_scores, ood_scores)?;
    let bi = id_scores.len() as f64;

    let mut combined: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    combined.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores must not be NaN"));

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        // consume the whole tie block before recording a curve point
        while j < combined.len() && combined[j].0 == combined[i].0 {
            if combined[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / bi;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// True-negative rate at the largest threshold that keeps the ID
/// true-positive rate at or above 95%: `tau` is the k-th largest ID score
/// with `k = ceil(0.95 * Bi)`, and the result is the fraction of OOD scores
/// strictly below `tau`.
pub fn tnr_at_tpr95(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_nonempty("tnr_at_tpr95", id_scores, ood_scores)?;
    let bi = id_scores.len();
    let k = (bi * 95).div_ceil(100); // exact ceil(0.95 * Bi) in integers
    let mut sorted_desc = sorted(id_scores);
    sorted_desc.reverse();
    let tau = sorted_desc[k - 1];
    let below = ood_scores.iter().filter(|&&s| s < tau).count();
    Ok(below as f64 / ood_scores.len() as f64)
}

/// Best balanced detection accuracy over all thresholds with equal priors:
/// `1 - min_delta 0.5 * (P_id(score <= delta) + P_ood(score > delta))`,
/// with `delta` swept over midpoints of adjacent sorted unique scores plus a
/// point beyond each end.
pub fn dtacc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_nonempty("dtacc", id_scores, ood_scores)?;
    let id = sorted(id_scores);
    let ood = sorted(ood_scores);

    let mut unique: Vec<f64> = id.iter().chain(ood.iter()).copied().collect();
    unique.sort_by(|a, b| a.partial_cmp(b).unwrap());
    unique.dedup();

    let mut candidates = Vec::with_capacity(unique.len() + 1);
    candidates.push(unique[0] - 1.0);
    for w in unique.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(unique[unique.len() - 1] + 1.0);

    let bi = id.len() as f64;
    let bo = ood.len() as f64;
    let mut min_err = f64::INFINITY;
    for &delta in &candidates {
        let id_below = id.partition_point(|&s| s <= delta) as f64;
        let ood_above = bo - ood.partition_point(|&s| s <= delta) as f64;
        let err = 0.5 * (id_below / bi + ood_above / bo);
        if err < min_err {
            min_err = err;
        }
    }
    Ok(1.0 - min_err)
}

/// Fraction of rows whose argmax equals the label; argmax ties break toward
/// the lowest class index.
pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    assert_eq!(probs.rows(), labels.len(), "accuracy: label count mismatch");
    let preds = argmax_rows(probs);
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len() as f64
}

/// Expected calibration error over equal-width confidence bins on `(0, 1]`:
/// `sum_b (n_b / B) * |acc_b - conf_b|` where confidence is the max
/// probability.
pub fn ece(probs: &Matrix, labels: &[usize], bins: usize) -> f64 {
    assert!(bins >= 1, "ece: need at least one bin");
    assert_eq!(probs.rows(), labels.len(), "ece: label count mismatch");
    let preds = argmax_rows(probs);
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for r in 0..probs.rows() {
        let conf = probs
            .row(r)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let b = bin_index(conf, bins);
        count[b] += 1;
        conf_sum[b] += conf;
        if preds[r] == labels[r] {
            correct[b] += 1;
        }
    }
    let total = labels.len() as f64;
    let mut e = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let acc = correct[b] as f64 / count[b] as f64;
        let conf = conf_sum[b] / count[b] as f64;
        e += count[b] as f64 / total * (acc - conf).abs();
    }
    e
}

/// Bin index for a confidence in `(0, 1]`: bin `b` covers `(b/K, (b+1)/K]`.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64).ceil() as usize)
        .saturating_sub(1)
        .min(bins - 1)
}

/// Per-bin reliability statistics, used by the reliability diagram.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

pub fn reliability_bins(probs: &Matrix, labels: &[usize], bins: usize) -> Vec<ReliabilityBin> {
    assert!(bins >= 1);
    let preds = argmax_rows(probs);
    let mut out = vec![
        ReliabilityBin {
            count: 0,
            mean_confidence: 0.0,
            accuracy: 0.0,
        };
        bins
    ];
    for r in 0..probs.rows() {
        let conf = probs
            .row(r)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let b = bin_index(conf, bins);
        out[b].count += 1;
        out[b].mean_confidence += conf;
        if preds[r] == labels[r] {
            out[b].accuracy += 1.0;
        }
    }
    for bin in &mut out {
        if bin.count > 0 {
            bin.mean_confidence /= bin.count as f64;
            bin.accuracy /= bin.count as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auroc_perfect_and_indistinguishable() {
        assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        let same = [0.3, 0.7, 0.7, 1.5];
        assert_eq!(auroc(&same, &same).unwrap(), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let id: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // quantized so ties actually occur
            let ood: Vec<f64> = (0..20)
                .map(|_| (rng.gen_range(-3.0f64..3.0) * 4.0).round() / 4.0)
                .collect();
            let got = auroc(&id, &ood).unwrap();
            let mut acc = 0.0;
            for &a in &id {
                for &b in &ood {
                    acc += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            let oracle = acc / (id.len() * ood.len()) as f64;
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn aupr_prior_rate_when_scores_are_constant() {
        let id = [1.0; 10];
        let ood = [1.0; 10];
        assert!((aupr(&id, &ood).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(aupr(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn aupr_matches_threshold_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let id: Vec<f64> = (0..25)
                .map(|_| (rng.gen_range(-2.0f64..2.0) * 8.0).round() / 8.0)
                .collect();
            let ood: Vec<f64> = (0..15)
                .map(|_| (rng.gen_range(-2.0f64..2.0) * 8.0).round() / 8.0)
                .collect();
            let got = aupr(&id, &ood).unwrap();
            let oracle = aupr_oracle(&id, &ood);
            assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        }
    }

    fn aupr_oracle(id: &[f64], ood: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = id.iter().chain(ood).copied().collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &tau in &thresholds {
            let tp = id.iter().filter(|&&s| s >= tau).count() as f64;
            let fp = ood.iter().filter(|&&s| s >= tau).count() as f64;
            let recall = tp / id.len() as f64;
            let precision = tp / (tp + fp);
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn tnr_at_tpr95_extremes() {
        let id: Vec<f64> = (0..40).map(|i| 10.0 + i as f64).collect();
        let ood: Vec<f64> = (0..40).map(|i| -(i as f64)).collect();
        assert_eq!(tnr_at_tpr95(&id, &ood).unwrap(), 1.0);

        let ood_high: Vec<f64> = (0..40).map(|i| 100.0 + i as f64).collect();
        assert_eq!(tnr_at_tpr95(&id, &ood_high).unwrap(), 0.0);
    }

    #[test]
    fn tnr_at_tpr95_with_outlier_block_matches_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 95 high id scores, 5 low outliers; ood straddles the threshold
        let mut id: Vec<f64> = (0..95).map(|_| rng.gen_range(10.0..20.0)).collect();
        id.extend((0..5).map(|_| rng.gen_range(0.0..1.0)));
        let ood: Vec<f64> = (0..60).map(|_| rng.gen_range(5.0..15.0)).collect();

        let got = tnr_at_tpr95(&id, &ood).unwrap();

        // oracle: sweep all id scores as candidate thresholds
        let mut best_tau = f64::NEG_INFINITY;
        for &tau in &id {
            let tpr = id.iter().filter(|&&s| s >= tau).count() as f64 / id.len() as f64;
            if tpr >= 0.95 && tau > best_tau {
                best_tau = tau;
            }
        }
        let oracle = ood.iter().filter(|&&s| s < best_tau).count() as f64 / ood.len() as f64;
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn dtacc_extremes_and_oracle() {
        assert_eq!(dtacc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        let same = [0.25, 0.5, 0.75];
        assert_eq!(dtacc(&same, &same).unwrap(), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let id: Vec<f64> = (0..30)
                .map(|_| (rng.gen_range(-2.0f64..2.0) * 4.0).round() / 4.0)
                .collect();
            let ood: Vec<f64> = (0..20)
                .map(|_| (rng.gen_range(-2.5f64..1.5) * 4.0).round() / 4.0)
                .collect();
            let got = dtacc(&id, &ood).unwrap();
            let oracle = dtacc_oracle(&id, &ood);
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    fn dtacc_oracle(id: &[f64], ood: &[f64]) -> f64 {
        let mut unique: Vec<f64> = id.iter().chain(ood).copied().collect();
        unique.sort_by(|a, b| a.partial_cmp(b).unwrap());
        unique.dedup();
        let mut candidates = vec![unique[0] - 1.0, unique[unique.len() - 1] + 1.0];
        for w in unique.windows(2) {
            candidates.push((w[0] + w[1]) / 2.0);
        }
        let mut best = f64::NEG_INFINITY;
        for &delta in &candidates {
            let a = id.iter().filter(|&&s| s <= delta).count() as f64 / id.len() as f64;
            let b = ood.iter().filter(|&&s| s > delta).count() as f64 / ood.len() as f64;
            best = best.max(1.0 - 0.5 * (a + b));
        }
        best
    }

    #[test]
    fn accuracy_examples() {
        let probs = Matrix::from_vec(2, 3, vec![0.9, 0.05, 0.05, 0.1, 0.2, 0.7]).unwrap();
        assert_eq!(accuracy(&probs, &[0, 2]), 1.0);
        assert_eq!(accuracy(&probs, &[1, 0]), 0.0);
    }

    #[test]
    fn ece_extremes_and_single_bin_identity() {
        let perfect = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(ece(&perfect, &[0, 1], 15), 0.0);
        assert_eq!(ece(&perfect, &[1, 0], 15), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 40;
        let data: Vec<f64> = (0..n)
            .flat_map(|_| {
                let p = rng.gen_range(0.3..0.99);
                [p, 1.0 - p]
            })
            .collect();
        let probs = Matrix::new_unchecked(n, 2, data);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let single = ece(&probs, &labels, 1);
        let acc = accuracy(&probs, &labels);
        let mean_conf: f64 = (0..n)
            .map(|r| {
                probs
                    .row(r)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / n as f64;
        assert!((single - (acc - mean_conf).abs()) < 1e-12);
    }

    #[test]
    fn ece_zero_for_constructed_calibrated_binary_set() {
        // confidence 0.7 everywhere, exactly 7 of 10 correct
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            data.extend([0.7, 0.3]);
            labels.push(if i < 7 { 0 } else { 1 });
        }
        let probs = Matrix::new_unchecked(10, 2, data);
        assert!(ece(&probs, &labels, 15).abs() < 1e-12);
    }

    #[test]
    fn empty_sides_are_contract_errors() {
        assert!(auroc(&[], &[1.0]).is_err());
        assert!(aupr(&[1.0], &[]).is_err());
        assert!(tnr_at_tpr95(&[], &[]).is_err());
        assert!(dtacc(&[], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn rank_metrics_invariant_under_monotone_transform(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let id: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ood: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = |s: f64| (s * 0.5).exp() + 3.0 * s; // strictly increasing
            let id_t: Vec<f64> = id.iter().map(|&s| f(s)).collect();
            let ood_t: Vec<f64> = ood.iter().map(|&s| f(s)).collect();
            prop_assert!((auroc(&id, &ood).unwrap() - auroc(&id_t, &ood_t).unwrap()).abs() < 1e-12);
            prop_assert!((aupr(&id, &ood).unwrap() - aupr(&id_t, &ood_t).unwrap()).abs() < 1e-12);
            prop_assert!((tnr_at_tpr95(&id, &ood).unwrap() - tnr_at_tpr95(&id_t, &ood_t).unwrap()).abs() < 1e-12);
            prop_assert!((dtacc(&id, &ood).unwrap() - dtacc(&id_t, &ood_t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn swapping_roles_complements_auroc(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let id: Vec<f64> = (0..15).map(|_| (rng.gen_range(-2.0..2.0) * 4.0f64).round() / 4.0).collect();
            let ood: Vec<f64> = (0..10).map(|_| (rng.gen_range(-2.0..2.0) * 4.0f64).round() / 4.0).collect();
            let forward = auroc(&id, &ood).unwrap();
            let swapped = auroc(&ood, &id).unwrap();
            prop_assert!((swapped - (1.0 - forward)).abs() < 1e-12);
            // negating the swapped scores restores the original
            let id_neg: Vec<f64> = id.iter().map(|s| -s).collect();
            let ood_neg: Vec<f64> = ood.iter().map(|s| -s).collect();
            let restored = auroc(&ood_neg, &id_neg).unwrap();
            prop_assert!((restored - forward).abs() < 1e-12);
        }

        #[test]
        fn dtacc_never_below_half(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
            let id: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ood: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!(dtacc(&id, &ood).unwrap() >= 0.5 - 1e-12);
        }
    }
}
