//! Experiment configuration: one JSON document drives the whole pipeline.
//! Every field has a default, so `{}` is a valid config describing the
//! standard toy experiment; flags override config fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use entropic_ood_core::encoder::{Activation, EncoderSpec};
use entropic_ood_core::heads::{LossConfig, LossKind};
use entropic_ood_core::optimizer::SgdConfig;
use entropic_ood_core::scores::ScoreKind;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
    pub loss: LossSettings,
    pub optimizer: OptimizerSettings,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub seed: u64,
    /// Default output directory; the `--out` flag takes precedence.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            encoder: EncoderConfig::default(),
            loss: LossSettings::default(),
            optimizer: OptimizerSettings::default(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
            seed: 1,
            output_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Files(FilesConfig),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic(SyntheticConfig::default())
    }
}

/// Synthetic toy data: Gaussian blobs as the in-distribution, a surrounding
/// ring and a uniform box as OOD sets, plus an `id_control` set drawn from
/// the blob distribution itself (detection against it should be chance).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// `[H, W, C]` with `H * W * C == dim`; enables mosaic building.
    pub grid_shape: Option<[usize; 3]>,
    /// Train/val/test fractions; must be positive and sum to 1.
    pub split: [f64; 3],
    pub ood_ring: Option<RingConfig>,
    pub ood_box: Option<BoxConfig>,
    /// Row count for the in-distribution control OOD set.
    pub ood_id_control: Option<usize>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 4,
            per_class: 150,
            dim: 2,
            spread: 0.6,
            grid_shape: None,
            split: [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            ood_ring: Some(RingConfig::default()),
            ood_box: Some(BoxConfig::default()),
            ood_id_control: Some(300),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingConfig {
    pub count: usize,
    pub radius: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            count: 300,
            radius: 4.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxConfig {
    pub count: usize,
    pub half_width: f64,
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig {
            count: 300,
            half_width: 6.0,
        }
    }
}

/// Pre-existing CSV data instead of the generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesConfig {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    /// Named OOD sets; order in the report follows this map.
    pub ood: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub grid_shape: Option<[usize; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_dims: vec![64, 64],
            feature_dim: 16,
            activation: Activation::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn to_spec(&self, input_dim: usize) -> EncoderSpec {
        EncoderSpec {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            activation: self.activation,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSettings {
    pub kind: LossKind,
    pub entropic_scale: f64,
    pub alpha: f64,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            kind: LossKind::IsoMax,
            entropic_scale: 10.0,
            alpha: 1.0,
        }
    }
}

impl LossSettings {
    pub fn to_config(&self) -> LossConfig {
        LossConfig {
            kind: self.kind,
            entropic_scale: self.entropic_scale,
            alpha: self.alpha,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub milestones: Vec<(usize, f64)>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            learning_rate: 0.1,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 1e-4,
            milestones: vec![(30, 10.0), (45, 10.0)],
        }
    }
}

impl OptimizerSettings {
    pub fn to_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            nesterov: self.nesterov,
            weight_decay: self.weight_decay,
            milestones: self.milestones.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 60,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub scores: Vec<ScoreKind>,
    pub ece_bins: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            scores: ScoreKind::ALL.to_vec(),
            ece_bins: 15,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.loss
            .to_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.train.epochs == 0 {
            return Err(CliError::config("train.epochs must be >= 1"));
        }
        if self.train.batch_size < 2 {
            return Err(CliError::config("train.batch_size must be >= 2"));
        }
        if self.eval.ece_bins == 0 {
            return Err(CliError::config("eval.ece_bins must be >= 1"));
        }
        if self.eval.scores.is_empty() {
            return Err(CliError::config("eval.scores must not be empty"));
        }
        if let DatasetConfig::Synthetic(s) = &self.dataset {
            if s.classes < 2 || s.dim < 2 || s.per_class == 0 {
                return Err(CliError::config(
                    "synthetic dataset needs classes >= 2, dim >= 2, per_class >= 1",
                ));
            }
            if s.split.iter().any(|&f| f <= 0.0) || (s.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(CliError::config(
                    "split fractions must be positive and sum to 1",
                ));
            }
            if let Some([h, w, c]) = s.grid_shape {
                if h * w * c != s.dim {
                    return Err(CliError::config(format!(
                        "grid_shape {h}x{w}x{c} does not match dim {}",
                        s.dim
                    )));
                }
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(CliError::config("grid_shape needs even H and W"));
                }
            }
            if let Some(ring) = &s.ood_ring {
                // ring must sit clear of the blob region
                let min_radius = entropic_ood_core::data::BLOB_CENTER_RADIUS + 3.0 * s.spread;
                if ring.radius <= min_radius {
                    return Err(CliError::config(format!(
                        "ood_ring.radius must exceed {min_radius} (blob radius + 3 spread)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pretty JSON for the run directory copy.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_config() {
        let config: ExperimentConfig = serde_json::from_str("{}").unwrap();
        config.validate().unwrap();
        assert_eq!(config.seed, 1);
        assert_eq!(config.train.epochs, 60);
        assert_eq!(config.loss.kind, LossKind::IsoMax);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>("{\"epochz\": 3}");
        assert!(err.is_err());
    }

    #[test]
    fn ring_radius_validation_uses_blob_geometry() {
        let mut config = ExperimentConfig::default();
        if let DatasetConfig::Synthetic(s) = &mut config.dataset {
            s.ood_ring = Some(RingConfig {
                count: 10,
                radius: 3.0,
            });
        }
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let config = ExperimentConfig::default();
        let json = config.to_json();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_json(), json);
    }
}
