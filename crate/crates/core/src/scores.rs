//! Detection scores computed at inference.
//!
//! Every score follows one orientation: higher means more in-distribution,
//! so the metrics layer never has to special-case a score kind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadParams, LossKind};
use crate::matrix::{self, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Maximum probability.
    Mps,
    /// Entropic score: negative Shannon entropy of the output probabilities.
    Es,
    /// Minimum distance score: negative smallest normalized
    /// feature-prototype distance (distance heads only).
    Mds,
    /// Largest logit.
    MaxLogit,
    /// Max logit + mean logit - output entropy.
    Mmles,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::Mps,
        ScoreKind::Es,
        ScoreKind::Mds,
        ScoreKind::MaxLogit,
        ScoreKind::Mmles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Mps => "mps",
            ScoreKind::Es => "es",
            ScoreKind::Mds => "mds",
            ScoreKind::MaxLogit => "max_logit",
            ScoreKind::Mmles => "mmles",
        }
    }

    /// Whether this score can be computed for a head of the given kind.
    /// Only MDS has a structural requirement (prototypes).
    pub fn supports(self, head: LossKind) -> bool {
        match self {
            ScoreKind::Mds => head.is_distance_based(),
            _ => true,
        }
    }

    /// Headline score per head kind, matching how each head is meant to be
    /// consumed. MPS remains available everywhere for near-OOD use.
    pub fn default_for(head: LossKind) -> ScoreKind {
        match head {
            LossKind::Softmax | LossKind::IsoMax => ScoreKind::Es,
            LossKind::IsoMaxPlus => ScoreKind::Mds,
            LossKind::DisMax => ScoreKind::Mmles,
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mps" => Ok(ScoreKind::Mps),
            "es" => Ok(ScoreKind::Es),
            "mds" => Ok(ScoreKind::Mds),
            "max_logit" => Ok(ScoreKind::MaxLogit),
            "mmles" => Ok(ScoreKind::Mmles),
            other => Err(Error::contract(format!("unknown score kind '{other}'"))),
        }
    }
}

/// Maximum probability score.
pub fn mps(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| {
            probs
                .row(r)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Negative entropy of each probability row.
pub fn entropic_score(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| -matrix::entropy_of_row(probs.row(r)))
        .collect()
}

/// Negative minimum distance between the normalized feature row and the
/// normalized prototypes. The distance scale is omitted: after training it is
/// a positive factor that cannot change the detection decision.
pub fn mds(features: &Matrix, head: &HeadParams) -> Result<Vec<f64>> {
    let prototypes = head
        .prototypes()
        .ok_or_else(|| Error::Unsupported("mds requires a head with prototypes".to_string()))?;
    let dists = matrix::pairwise_euclidean(
        &matrix::normalize_rows(features),
        &matrix::normalize_rows(prototypes),
    )?;
    Ok((0..dists.rows())
        .map(|r| -dists.row(r).iter().copied().fold(f64::INFINITY, f64::min))
        .collect())
}

/// Largest logit per row.
pub fn max_logit(logits: &Matrix) -> Vec<f64> {
    (0..logits.rows())
        .map(|r| {
            logits
                .row(r)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Composite score: max logit + mean logit - entropy of the probabilities
/// derived from the same logits.
pub fn mmles(logits_plus: &Matrix, probs: &Matrix) -> Result<Vec<f64>> {
    if logits_plus.shape() != probs.shape() {
        return Err(Error::shape(
            "mmles",
            format!("{}x{}", logits_plus.rows(), logits_plus.cols()),
            format!("{}x{}", probs.rows(), probs.cols()),
        ));
    }
    Ok((0..logits_plus.rows())
        .map(|r| {
            let row = logits_plus.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            max + mean - matrix::entropy_of_row(probs.row(r))
        })
        .collect())
}
