//! Classification heads and training losses: the affine softmax baseline and
//! the three distance-based heads (IsoMax, IsoMax+, DisMax).
//!
//! The distance heads share one training recipe: logits are negative
//! feature-prototype distances, the entropic scale multiplies the logits
//! during training only, and the cross-entropy is evaluated as two sequential
//! steps (softmax, then log) rather than a fused log-softmax. Removing the
//! entropic scale at inference is what yields high-entropy posteriors without
//! changing a single prediction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{self, TEMPERATURE_BOUNDS};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::tape::{GradTape, Var};

/// Probabilities are floored here before the log so a saturated
/// `exp(-E_s * d)` cannot produce an infinite loss. Floor hits are counted by
/// the tape and surfaced in training diagnostics.
pub const PROB_FLOOR: f64 = 1e-300;

/// Default entropic scale; a training-time constant, never tuned per dataset.
pub const DEFAULT_ENTROPIC_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "softmax")]
    Softmax,
    #[serde(rename = "isomax")]
    IsoMax,
    #[serde(rename = "isomax_plus")]
    IsoMaxPlus,
    #[serde(rename = "dismax")]
    DisMax,
}

impl LossKind {
    pub fn is_distance_based(self) -> bool {
        !matches!(self, LossKind::Softmax)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::IsoMax => "isomax",
            LossKind::IsoMaxPlus => "isomax_plus",
            LossKind::DisMax => "dismax",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(LossKind::Softmax),
            "isomax" => Ok(LossKind::IsoMax),
            "isomax_plus" => Ok(LossKind::IsoMaxPlus),
            "dismax" => Ok(LossKind::DisMax),
            other => Err(Error::contract(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Constant multiplier on training logits; removed at inference.
    pub entropic_scale: f64,
    /// Weight of the fractional-probability regularizer (DisMax only).
    pub alpha: f64,
    /// Inference temperature, set by calibration; training always runs at 1.
    pub temperature: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        LossConfig {
            kind,
            entropic_scale: DEFAULT_ENTROPIC_SCALE,
            alpha: 1.0,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entropic_scale <= 0.0 {
            return Err(Error::contract("entropic_scale must be positive"));
        }
        if self.alpha < 0.0 {
            return Err(Error::contract("alpha must be non-negative"));
        }
        if self.temperature < TEMPERATURE_BOUNDS.0 || self.temperature > TEMPERATURE_BOUNDS.1 {
            return Err(Error::contract(format!(
                "temperature must lie in [{}, {}]",
                TEMPERATURE_BOUNDS.0, TEMPERATURE_BOUNDS.1
            )));
        }
        Ok(())
    }

    /// Scale applied to training logits: the entropic scale for distance
    /// heads, 1 for the affine baseline.
    pub fn training_scale(&self) -> f64 {
        if self.kind.is_distance_based() {
            self.entropic_scale
        } else {
            1.0
        }
    }
}

/// Learnable head parameters. Distance heads hold one prototype row per
/// class; the scaled variants add a single scalar distance scale used as
/// `|d_s|` wherever it appears.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadParams {
    Affine {
        weight: Matrix,
        bias: Matrix,
    },
    Prototypes {
        prototypes: Matrix,
    },
    ScaledPrototypes {
        prototypes: Matrix,
        distance_scale: Matrix,
    },
}

impl HeadParams {
    pub fn num_classes(&self) -> usize {
        match self {
            HeadParams::Affine { weight, .. } => weight.rows(),
            HeadParams::Prototypes { prototypes } => prototypes.rows(),
            HeadParams::ScaledPrototypes { prototypes, .. } => prototypes.rows(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            HeadParams::Affine { weight, .. } => weight.cols(),
            HeadParams::Prototypes { prototypes } => prototypes.cols(),
            HeadParams::ScaledPrototypes { prototypes, .. } => prototypes.cols(),
        }
    }

    pub fn prototypes(&self) -> Option<&Matrix> {
        match self {
            HeadParams::Affine { .. } => None,
            HeadParams::Prototypes { prototypes } => Some(prototypes),
            HeadParams::ScaledPrototypes { prototypes, .. } => Some(prototypes),
        }
    }

    pub fn distance_scale(&self) -> Option<f64> {
        match self {
            HeadParams::ScaledPrototypes { distance_scale, .. } => {
                Some(distance_scale.scalar_value())
            }
            _ => None,
        }
    }

    fn matches(&self, kind: LossKind) -> bool {
        matches!(
            (self, kind),
            (HeadParams::Affine { .. }, LossKind::Softmax)
                | (HeadParams::Prototypes { .. }, LossKind::IsoMax)
                | (HeadParams::ScaledPrototypes { .. }, LossKind::IsoMaxPlus)
                | (HeadParams::ScaledPrototypes { .. }, LossKind::DisMax)
        )
    }
}

/// Head initialization.
///
/// IsoMax starts every prototype at the zero vector (the natural value for
/// untrained embeddings). IsoMax+ and DisMax draw prototypes from
/// `Normal(0, 1)` because they are normalized afterwards, and start the
/// distance scale at one. The affine baseline gets a symmetric-uniform init
/// with zero bias.
pub fn init_head(
    kind: LossKind,
    classes: usize,
    feature_dim: usize,
    rng: &mut impl Rng,
) -> Result<HeadParams> {
    if classes < 2 {
        return Err(Error::contract("init_head: need at least 2 classes"));
    }
    if feature_dim < 1 {
        return Err(Error::contract("init_head: feature_dim must be >= 1"));
    }
    Ok(match kind {
        LossKind::Softmax => {
            let bound = (6.0 / (classes + feature_dim) as f64).sqrt();
            let data: Vec<f64> = (0..classes * feature_dim)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            HeadParams::Affine {
                weight: Matrix::new_unchecked(classes, feature_dim, data),
                bias: Matrix::zeros(1, classes),
            }
        }
        LossKind::IsoMax => HeadParams::Prototypes {
            prototypes: Matrix::zeros(classes, feature_dim),
        },
        LossKind::IsoMaxPlus | LossKind::DisMax => {
            let data: Vec<f64> = (0..classes * feature_dim)
                .map(|_| StandardNormal.sample(rng))
                .collect();
            HeadParams::ScaledPrototypes {
                prototypes: Matrix::new_unchecked(classes, feature_dim, data),
                distance_scale: Matrix::scalar(1.0),
            }
        }
    })
}

fn check_head(kind: LossKind, head: &HeadParams, features: &Matrix) -> Result<()> {
    if !head.matches(kind) {
        return Err(Error::contract(format!(
            "head parameters do not match loss kind {kind}"
        )));
    }
    if features.cols() != head.feature_dim() {
        return Err(Error::shape(
            "head_logits",
            format!("feature dim {}", head.feature_dim()),
            format!("{}", features.cols()),
        ));
    }
    Ok(())
}

/// Per-class logits for a batch of features.
///
/// softmax: `W f + b`. isomax: `-|f - p_j|` (nonsquared Euclidean).
/// isomax_plus: `-|d_s| * |f^ - p^_j|` over 2-normalized rows. dismax:
/// `L+_j = -(D_I^j + mean_n D_I^n)` with `D_I` the isometric distance.
pub fn head_logits(kind: LossKind, head: &HeadParams, features: &Matrix) -> Result<Matrix> {
    check_head(kind, head, features)?;
    Ok(match (kind, head) {
        (LossKind::Softmax, HeadParams::Affine { weight, bias }) => {
            matrix::add_row_broadcast(&matrix::matmul_nt(features, weight), bias)
        }
        (LossKind::IsoMax, HeadParams::Prototypes { prototypes }) => {
            matrix::scale(&matrix::pairwise_euclidean(features, prototypes)?, -1.0)
        }
        (
            LossKind::IsoMaxPlus,
            HeadParams::ScaledPrototypes {
                prototypes,
                distance_scale,
            },
        ) => {
            let d = isometric_distances(features, prototypes, distance_scale.scalar_value())?;
            matrix::scale(&d, -1.0)
        }
        (
            LossKind::DisMax,
            HeadParams::ScaledPrototypes {
                prototypes,
                distance_scale,
            },
        ) => {
            let d = isometric_distances(features, prototypes, distance_scale.scalar_value())?;
            let mean = matrix::row_mean(&d);
            matrix::scale(&matrix::add_col_broadcast(&d, &mean), -1.0)
        }
        _ => unreachable!("check_head verified the pairing"),
    })
}

/// `|d_s| * |f^ - p^_j|` for every feature/prototype pair.
pub fn isometric_distances(
    features: &Matrix,
    prototypes: &Matrix,
    distance_scale: f64,
) -> Result<Matrix> {
    let d = matrix::pairwise_euclidean(
        &matrix::normalize_rows(features),
        &matrix::normalize_rows(prototypes),
    )?;
    Ok(matrix::scale(&d, distance_scale.abs()))
}

/// Head parameter leafs on a tape, mirroring [`HeadParams`].
#[derive(Clone, Copy)]
pub enum HeadVars {
    Affine {
        weight: Var,
        bias: Var,
    },
    Prototypes {
        prototypes: Var,
    },
    ScaledPrototypes {
        prototypes: Var,
        distance_scale: Var,
    },
}

impl HeadVars {
    /// Creates leafs for the head parameters, in the same order as
    /// [`crate::model::ModelParams::flatten`].
    pub fn leafs(tape: &GradTape, head: &HeadParams) -> HeadVars {
        match head {
            HeadParams::Affine { weight, bias } => HeadVars::Affine {
                weight: tape.leaf(weight.clone()),
                bias: tape.leaf(bias.clone()),
            },
            HeadParams::Prototypes { prototypes } => HeadVars::Prototypes {
                prototypes: tape.leaf(prototypes.clone()),
            },
            HeadParams::ScaledPrototypes {
                prototypes,
                distance_scale,
            } => HeadVars::ScaledPrototypes {
                prototypes: tape.leaf(prototypes.clone()),
                distance_scale: tape.leaf(distance_scale.clone()),
            },
        }
    }

    pub fn as_vars(&self) -> Vec<Var> {
        match *self {
            HeadVars::Affine { weight, bias } => vec![weight, bias],
            HeadVars::Prototypes { prototypes } => vec![prototypes],
            HeadVars::ScaledPrototypes {
                prototypes,
                distance_scale,
            } => {
                vec![prototypes, distance_scale]
            }
        }
    }
}

/// Taped version of [`head_logits`] used during training.
pub fn head_logits_tape(tape: &GradTape, kind: LossKind, head: &HeadVars, features: Var) -> Var {
    match (kind, head) {
        (LossKind::Softmax, HeadVars::Affine { weight, bias }) => {
            let lin = tape.matmul_nt(features, *weight);
            tape.add_row_broadcast(lin, *bias)
        }
        (LossKind::IsoMax, HeadVars::Prototypes { prototypes }) => {
            let d = tape.pairwise_euclidean(features, *prototypes);
            tape.scale(d, -1.0)
        }
        (
            LossKind::IsoMaxPlus,
            HeadVars::ScaledPrototypes {
                prototypes,
                distance_scale,
            },
        ) => {
            let d = isometric_distances_tape(tape, features, *prototypes, *distance_scale);
            tape.scale(d, -1.0)
        }
        (
            LossKind::DisMax,
            HeadVars::ScaledPrototypes {
                prototypes,
                distance_scale,
            },
        ) => {
            let d = isometric_distances_tape(tape, features, *prototypes, *distance_scale);
            let mean = tape.row_mean(d);
            let sum = tape.add_col_broadcast(d, mean);
            tape.scale(sum, -1.0)
        }
        _ => panic!("head variables do not match loss kind {kind}"),
    }
}

fn isometric_distances_tape(
    tape: &GradTape,
    features: Var,
    prototypes: Var,
    distance_scale: Var,
) -> Var {
    let fn_ = tape.normalize_rows(features);
    let pn = tape.normalize_rows(prototypes);
    let d = tape.pairwise_euclidean(fn_, pn);
    let scale = tape.abs(distance_scale);
    tape.scale_by_var(d, scale)
}

/// Mean cross-entropy `-log(softmax(E_s * logits)[target])` over the batch.
///
/// The probability and the logarithm are two sequential tape operations, not
/// a fused log-softmax: keeping them separate preserves the high output
/// entropy the distance heads rely on. Probabilities are floored at
/// [`PROB_FLOOR`] before the log; the tape counts floor hits for diagnostics.
pub fn training_loss(
    kind: LossKind,
    config: &LossConfig,
    logits: Var,
    targets: &[usize],
    tape: &GradTape,
) -> Result<Var> {
    let (rows, cols) = tape.shape(logits);
    if rows != targets.len() {
        return Err(Error::shape(
            "training_loss",
            format!("{rows} targets"),
            format!("{}", targets.len()),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
        return Err(Error::contract(format!(
            "training_loss: target {bad} out of range for {cols} classes"
        )));
    }
    debug_assert_eq!(kind, config.kind);
    let scaled = tape.scale(logits, config.training_scale());
    let probs = tape.softmax_rows(scaled);
    let picked = tape.gather_targets(probs, targets);
    let floored = tape.clamp_min(picked, PROB_FLOOR);
    let logp = tape.log(floored);
    let mean = tape.mean_all(logp);
    Ok(tape.scale(mean, -1.0))
}

/// Fractional-probability target for a compound example built from four
/// sources: one quarter per source label, `Q_i = count(label == i) / 4`.
pub fn fpr_target(labels4: [usize; 4], classes: usize) -> Result<Vec<f64>> {
    let mut q = vec![0.0; classes];
    for &l in &labels4 {
        if l >= classes {
            return Err(Error::contract(format!(
                "fpr_target: label {l} out of range for {classes} classes"
            )));
        }
        q[l] += 0.25;
    }
    Ok(q)
}

/// `KL(Q || P)` averaged over the compound batch, with `0 log 0 == 0` and `P`
/// floored at [`PROB_FLOOR`]. `Q` carries structural zeros, so this
/// (soft-target cross-entropy) direction is the finite one.
pub fn fpr_penalty(probs: &Matrix, targets_q: &Matrix) -> f64 {
    assert_eq!(
        probs.shape(),
        targets_q.shape(),
        "fpr_penalty: shape mismatch"
    );
    let mut total = 0.0;
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let q = targets_q.row(r);
        let mut row = 0.0;
        for (pv, qv) in p.iter().zip(q) {
            if *qv > 0.0 {
                row += qv * (qv.ln() - pv.max(PROB_FLOOR).ln());
            }
        }
        total += row;
    }
    total / probs.rows() as f64
}

/// Taped [`fpr_penalty`]; `targets_q` is a constant, so only `probs`
/// receives gradient.
pub fn fpr_penalty_tape(tape: &GradTape, probs: Var, targets_q: &Matrix) -> Var {
    let (rows, cols) = tape.shape(probs);
    assert_eq!(
        (rows, cols),
        targets_q.shape(),
        "fpr_penalty_tape: shape mismatch"
    );
    // constant part: mean over rows of sum_i Q log Q
    let mut qlogq = 0.0;
    for r in 0..rows {
        qlogq += targets_q
            .row(r)
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|&q| q * q.ln())
            .sum::<f64>();
    }
    qlogq /= rows as f64;

    let floored = tape.clamp_min(probs, PROB_FLOOR);
    let logp = tape.log(floored);
    let weighted = tape.mul_const(logp, targets_q);
    let row_sums = tape.row_sum(weighted);
    let mean_qlogp = tape.mean_all(row_sums);
    let neg = tape.scale(mean_qlogp, -1.0);
    tape.add_const(neg, qlogq)
}

/// Full DisMax objective: standard-half cross-entropy plus
/// `alpha * KL(Q || P)` on the compound half. With `alpha == 0` this is plain
/// DisMax and the compound half may be absent.
pub fn dismax_loss(
    config: &LossConfig,
    logits_std: Var,
    targets_std: &[usize],
    probs_compound: Option<Var>,
    targets_q: Option<&Matrix>,
    tape: &GradTape,
) -> Result<Var> {
    let std_loss = training_loss(LossKind::DisMax, config, logits_std, targets_std, tape)?;
    if config.alpha == 0.0 {
        return Ok(std_loss);
    }
    let (probs, q) = match (probs_compound, targets_q) {
        (Some(p), Some(q)) if q.rows() > 0 => (p, q),
        _ => {
            return Err(Error::contract(
                "dismax_loss: alpha > 0 requires a non-empty compound half",
            ))
        }
    };
    let kl = fpr_penalty_tape(tape, probs, q);
    let weighted = tape.scale(kl, config.alpha);
    Ok(tape.add(std_loss, weighted))
}

/// Training-time probabilities for the compound half: softmax of
/// `E_s * logits` at temperature 1, recorded on the tape.
pub fn compound_probabilities_tape(tape: &GradTape, config: &LossConfig, logits: Var) -> Var {
    let scaled = tape.scale(logits, config.training_scale());
    tape.softmax_rows(scaled)
}

/// Inference probabilities: `softmax(logits / T)` with the entropic scale
/// removed. The scale is dropped after training but before calibration, so
/// temperature search always operates on these logits.
pub fn inference_probabilities(
    kind: LossKind,
    config: &LossConfig,
    head: &HeadParams,
    features: &Matrix,
) -> Result<Matrix> {
    let logits = head_logits(kind, head, features)?;
    calibration::apply_temperature(&logits, config.temperature)
}
