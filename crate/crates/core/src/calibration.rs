//! Post-training temperature scaling.
//!
//! ECE as a function of the temperature is piecewise constant (confidences
//! jump between bins), so instead of a quasi-Newton search we scan a dense
//! log-spaced grid over the allowed range and refine the best cell with a
//! golden-section pass. `T = 1` is always in the candidate set, which
//! guarantees calibration never makes ECE worse, and positive temperatures
//! never change the argmax, so predictions are untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::metrics::ece;

/// Allowed temperature range for calibration and inference.
pub const TEMPERATURE_BOUNDS: (f64, f64) = (0.001, 100.0);

const GRID_POINTS: usize = 64;
const GOLDEN_ITERS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub temperature: f64,
    pub ece_before: f64,
    pub ece_after: f64,
    /// Number of ECE evaluations spent by the search.
    pub evaluations: usize,
}

/// `softmax(logits / T)`. Errors when `T` is outside [`TEMPERATURE_BOUNDS`].
pub fn apply_temperature(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(TEMPERATURE_BOUNDS.0..=TEMPERATURE_BOUNDS.1).contains(&temperature) {
        return Err(Error::contract(format!(
            "temperature {temperature} outside [{}, {}]",
            TEMPERATURE_BOUNDS.0, TEMPERATURE_BOUNDS.1
        )));
    }
    Ok(matrix::stable_softmax(&matrix::scale(
        logits,
        1.0 / temperature,
    )))
}

/// Minimizes `T -> ece(softmax(logits / T), labels, bins)` over the bounded
/// range. Logits must already be inference logits, i.e. with the entropic
/// scale removed.
pub fn calibrate_temperature(
    val_logits: &Matrix,
    labels: &[usize],
    bins: usize,
) -> Result<CalibrationResult> {
    if !val_logits.is_finite() {
        return Err(Error::contract("calibrate_temperature: non-finite logits"));
    }
    if val_logits.rows() < 2 {
        return Err(Error::contract(
            "calibrate_temperature: need at least 2 examples",
        ));
    }
    if val_logits.rows() != labels.len() {
        return Err(Error::shape(
            "calibrate_temperature",
            format!("{} labels", val_logits.rows()),
            format!("{}", labels.len()),
        ));
    }

    let mut evaluations = 0usize;
    let mut eval = |t: f64| -> f64 {
        evaluations += 1;
        let probs = matrix::stable_softmax(&matrix::scale(val_logits, 1.0 / t));
        ece(&probs, labels, bins)
    };

    let (lo, hi) = (TEMPERATURE_BOUNDS.0.ln(), TEMPERATURE_BOUNDS.1.ln());
    let ece_before = eval(1.0);

    // dense grid in log space
    let mut best_i = 0;
    let mut best = (TEMPERATURE_BOUNDS.0, f64::INFINITY);
    let grid_t = |i: usize| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp();
    for i in 0..GRID_POINTS {
        let t = grid_t(i);
        let e = eval(t);
        if e < best.1 {
            best = (t, e);
            best_i = i;
        }
    }

    // golden-section refinement around the best grid cell, still in log space
    let mut a = if best_i == 0 {
        lo
    } else {
        grid_t(best_i - 1).ln()
    };
    let mut b = if best_i + 1 == GRID_POINTS {
        hi
    } else {
        grid_t(best_i + 1).ln()
    };
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c.exp());
    let mut fd = eval(d.exp());
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d.exp());
        }
    }
    let refined_t = if fc <= fd { c.exp() } else { d.exp() };
    let refined_e = fc.min(fd);

    // candidate order matters: T = 1 wins ties so an already calibrated
    // model keeps its temperature
    let mut winner = (1.0, ece_before);
    for (t, e) in [best, (refined_t, refined_e)] {
        if e < winner.1 {
            winner = (t, e);
        }
    }
    let temperature = winner.0.clamp(TEMPERATURE_BOUNDS.0, TEMPERATURE_BOUNDS.1);

    Ok(CalibrationResult {
        temperature,
        ece_before,
        ece_after: winner.1,
        evaluations,
    })
}
