//! SGD with Nesterov momentum, weight decay and milestone learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ParamMeta;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    /// `(epoch, factor)` milestones; the learning rate is divided by
    /// `factor` once the epoch is reached.
    pub milestones: Vec<(usize, f64)>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 1e-4,
            milestones: vec![(30, 10.0), (45, 10.0)],
        }
    }
}

/// Optimizer state: one velocity buffer per parameter, plus the epoch used
/// for the schedule. The weight-decay mask lives in [`ParamMeta`]; it covers
/// every parameter except the distance scale, which acts as a learned
/// temperature and would collapse the logits if decayed toward zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub config: SgdConfig,
    velocities: Vec<Matrix>,
    epoch: usize,
}

impl Sgd {
    pub fn new(config: SgdConfig, params: &[&Matrix]) -> Self {
        let velocities = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Sgd {
            config,
            velocities,
            epoch: 0,
        }
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Learning rate after applying every milestone at or before `epoch`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let mut lr = self.config.learning_rate;
        for &(milestone, factor) in &self.config.milestones {
            if epoch >= milestone {
                lr /= factor;
            }
        }
        lr
    }

    /// One Nesterov step: with `d = g + wd * p`,
    /// `v <- mu * v - lr * d` and `p <- p + mu * v - lr * d`
    /// (`p <- p + v` when `nesterov` is off). Errors on the first
    /// non-finite gradient, naming the parameter.
    pub fn step(
        &mut self,
        meta: &[ParamMeta],
        params: &mut [&mut Matrix],
        grads: &[Matrix],
    ) -> Result<()> {
        assert_eq!(
            params.len(),
            self.velocities.len(),
            "sgd: parameter count changed"
        );
        assert_eq!(params.len(), grads.len(), "sgd: gradient count mismatch");
        assert_eq!(params.len(), meta.len(), "sgd: metadata count mismatch");

        for (i, grad) in grads.iter().enumerate() {
            if !grad.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for parameter '{}'",
                    meta[i].name
                )));
            }
            if grad.shape() != params[i].shape() {
                return Err(Error::shape(
                    "sgd_step",
                    format!("{:?} for '{}'", params[i].shape(), meta[i].name),
                    format!("{:?}", grad.shape()),
                ));
            }
        }

        let lr = self.lr_at_epoch(self.epoch);
        let mu = self.config.momentum;
        for i in 0..params.len() {
            let wd = if meta[i].decay {
                self.config.weight_decay
            } else {
                0.0
            };
            let p = params[i].data_mut();
            let v = self.velocities[i].data_mut();
            let g = grads[i].data();
            for j in 0..p.len() {
                let d = g[j] + wd * p[j];
                v[j] = mu * v[j] - lr * d;
                if self.config.nesterov {
                    p[j] += mu * v[j] - lr * d;
                } else {
                    p[j] += v[j];
                }
            }
        }
        Ok(())
    }
}
