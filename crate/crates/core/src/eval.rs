//! Model evaluation: per-head classification accuracy and ECE on the ID test
//! set, plus the four detection metrics for every (score, OOD set) pair.
//! Score/head combinations that cannot be computed (MDS without prototypes)
//! are reported as unsupported rows rather than failing the run.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics;
use crate::model::Model;
use crate::scores::{self, ScoreKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub aupr: f64,
    pub tnr_at_tpr95: f64,
    pub dtacc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionRow {
    pub score: ScoreKind,
    pub ood_set: String,
    /// `None` when the score is unsupported for this head.
    pub metrics: Option<DetectionMetrics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeadReport {
    pub head: String,
    pub accuracy: f64,
    pub ece: f64,
    pub temperature: f64,
    pub rows: Vec<DetectionRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub ece_bins: usize,
    pub heads: Vec<HeadReport>,
}

/// Scores one dataset under one model for one score kind.
pub fn score_dataset(model: &Model, score: ScoreKind, x: &Matrix) -> Result<Vec<f64>> {
    let features = model.features(x)?;
    let logits = crate::heads::head_logits(model.loss.kind, &model.params.head, &features)?;
    let probs = crate::calibration::apply_temperature(&logits, model.loss.temperature)?;
    match score {
        ScoreKind::Mps => Ok(scores::mps(&probs)),
        ScoreKind::Es => Ok(scores::entropic_score(&probs)),
        ScoreKind::Mds => scores::mds(&features, &model.params.head),
        ScoreKind::MaxLogit => Ok(scores::max_logit(&logits)),
        ScoreKind::Mmles => scores::mmles(&logits, &probs),
    }
}

/// Evaluates every named model against the ID test set and each OOD set.
pub fn evaluate(
    models: &[(String, &Model)],
    id_test: &LabeledDataset,
    ood_sets: &[(String, Matrix)],
    score_kinds: &[ScoreKind],
    ece_bins: usize,
) -> Result<EvalReport> {
    let labels = id_test
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("evaluate: ID test set must be labeled"))?;

    let mut heads = Vec::with_capacity(models.len());
    for (name, model) in models {
        let probs = model.inference_probabilities(&id_test.features)?;
        let accuracy = metrics::accuracy(&probs, labels);
        let ece = metrics::ece(&probs, labels, ece_bins);

        let mut rows = Vec::new();
        for &score in score_kinds {
            let supported = score.supports(model.loss.kind);
            let id_scores = if supported {
                Some(score_dataset(model, score, &id_test.features)?)
            } else {
                None
            };
            for (ood_name, ood_features) in ood_sets {
                let metrics = match &id_scores {
                    Some(id_scores) => {
                        let ood_scores = score_dataset(model, score, ood_features)?;
                        Some(DetectionMetrics {
                            auroc: metrics::auroc(id_scores, &ood_scores)?,
                            aupr: metrics::aupr(id_scores, &ood_scores)?,
                            tnr_at_tpr95: metrics::tnr_at_tpr95(id_scores, &ood_scores)?,
                            dtacc: metrics::dtacc(id_scores, &ood_scores)?,
                        })
                    }
                    None => None,
                };
                rows.push(DetectionRow {
                    score,
                    ood_set: ood_name.clone(),
                    metrics,
                });
            }
        }
        heads.push(HeadReport {
            head: name.clone(),
            accuracy,
            ece,
            temperature: model.loss.temperature,
            rows,
        });
    }
    Ok(EvalReport { ece_bins, heads })
}

impl EvalReport {
    pub fn head(&self, name: &str) -> Option<&HeadReport> {
        self.heads.iter().find(|h| h.head == name)
    }
}

impl HeadReport {
    pub fn detection(&self, score: ScoreKind, ood_set: &str) -> Option<&DetectionMetrics> {
        self.rows
            .iter()
            .find(|r| r.score == score && r.ood_set == ood_set)
            .and_then(|r| r.metrics.as_ref())
    }
}
