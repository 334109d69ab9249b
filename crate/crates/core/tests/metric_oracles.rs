//! Brute-force oracle battery for the detection and calibration metrics.
//! Each oracle recomputes the metric from its definition (pairwise counting,
//! exhaustive threshold sweeps, direct binning) so the production code path
//! is never checked against itself.

use entropic_ood_core::matrix::Matrix;
use entropic_ood_core::metrics::{accuracy, aupr, auroc, dtacc, ece, tnr_at_tpr95};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores quantized to quarters so ties occur regularly.
fn random_scores(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| (rng.gen_range(lo..hi) * 4.0f64).round() / 4.0)
        .collect()
}

fn auroc_oracle(id: &[f64], ood: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &a in id {
        for &b in ood {
            acc += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (id.len() * ood.len()) as f64
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

fn tnr_oracle(id: &[f64], ood: &[f64]) -> f64 {
    let mut best_tau = f64::NEG_INFINITY;
    for &tau in id {
        let tpr = id.iter().filter(|&&s| s >= tau).count() as f64 / id.len() as f64;
        if tpr >= 0.95 && tau > best_tau {
            best_tau = tau;
        }
    }
    ood.iter().filter(|&&s| s < best_tau).count() as f64 / ood.len() as f64
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

fn ece_oracle(probs: &Matrix, labels: &[usize], bins: usize) -> f64 {
    let total = labels.len() as f64;
    let mut e = 0.0;
    for b in 0..bins {
        let mut count = 0usize;
        let mut conf_sum = 0.0;
        let mut correct = 0usize;
        for (r, &label) in labels.iter().enumerate() {
            let row = probs.row(r);
            let mut conf = f64::NEG_INFINITY;
            let mut pred = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > conf {
                    conf = p;
                    pred = i;
                }
            }
            let idx = ((conf * bins as f64).ceil() as usize)
                .saturating_sub(1)
                .min(bins - 1);
            if idx == b {
                count += 1;
                conf_sum += conf;
                if pred == label {
                    correct += 1;
                }
            }
        }
        if count > 0 {
            let acc = correct as f64 / count as f64;
            let conf = conf_sum / count as f64;
            e += count as f64 / total * (acc - conf).abs();
        }
    }
    e
}

#[test]
fn detection_metrics_match_oracles_on_100_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE7EC7);
    for round in 0..100 {
        let bi = rng.gen_range(5..=200);
        let bo = rng.gen_range(5..=200);
        let shift = rng.gen_range(-1.0..1.0);
        let id = random_scores(&mut rng, bi, -2.0 + shift, 2.0 + shift);
        let ood = random_scores(&mut rng, bo, -3.0, 1.5);

        let a = auroc(&id, &ood).unwrap();
        assert!(
            (a - auroc_oracle(&id, &ood)).abs() <= 1e-12,
            "auroc mismatch on round {round}"
        );
        let p = aupr(&id, &ood).unwrap();
        assert!(
            (p - aupr_oracle(&id, &ood)).abs() <= 1e-12,
            "aupr mismatch on round {round}"
        );
        let t = tnr_at_tpr95(&id, &ood).unwrap();
        assert!(
            (t - tnr_oracle(&id, &ood)).abs() <= 1e-12,
            "tnr mismatch on round {round}"
        );
        let d = dtacc(&id, &ood).unwrap();
        assert!(
            (d - dtacc_oracle(&id, &ood)).abs() <= 1e-12,
            "dtacc mismatch on round {round}"
        );
    }
}

#[test]
fn ece_and_accuracy_match_oracles_on_100_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1B5);
    for round in 0..100 {
        let b = rng.gen_range(5..=200);
        let classes = rng.gen_range(2..=6);
        let mut data = Vec::with_capacity(b * classes);
        for _ in 0..b {
            let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / total));
        }
        let probs = Matrix::from_vec(b, classes, data).unwrap();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();

        let e = ece(&probs, &labels, 15);
        assert!(
            (e - ece_oracle(&probs, &labels, 15)).abs() <= 1e-12,
            "ece mismatch on round {round}"
        );

        // accuracy against a per-row loop
        let mut correct = 0;
        for (r, &label) in labels.iter().enumerate() {
            let row = probs.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        let expect = correct as f64 / b as f64;
        assert_eq!(
            accuracy(&probs, &labels),
            expect,
            "accuracy mismatch on round {round}"
        );
    }
}
