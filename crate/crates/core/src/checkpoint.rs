//! Checkpoint persistence: one JSON document holding every trained model
//! (primary head plus the softmax baseline), the optimizer state, the
//! recorded validation split and any calibration result.
//!
//! Floats are printed with 17 significant digits, which round-trips every
//! `f64` exactly, so a reloaded checkpoint is bitwise identical to the saved
//! one.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::calibration::CalibrationResult;
use crate::data::LabeledDataset;
use crate::encoder::EncoderSpec;
use crate::error::Result;
use crate::heads::LossConfig;
use crate::matrix::Matrix;
use crate::model::{Model, ModelParams};
use crate::optimizer::Sgd;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub name: String,
    pub spec: EncoderSpec,
    pub classes: usize,
    pub params: ModelParams,
    pub optimizer_state: Sgd,
    pub epoch: usize,
    pub loss_config: LossConfig,
    pub calibration: Option<CalibrationResult>,
}

impl ModelCheckpoint {
    pub fn to_model(&self) -> Model {
        Model {
            encoder: self.spec.clone(),
            classes: self.classes,
            params: self.params.clone(),
            loss: self.loss_config,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub models: Vec<ModelCheckpoint>,
    pub val_features: Option<Matrix>,
    pub val_labels: Option<Vec<usize>>,
}

impl Checkpoint {
    pub fn model(&self, name: &str) -> Option<&ModelCheckpoint> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn model_mut(&mut self, name: &str) -> Option<&mut ModelCheckpoint> {
        self.models.iter_mut().find(|m| m.name == name)
    }

    pub fn val_dataset(&self) -> Option<LabeledDataset> {
        match (&self.val_features, &self.val_labels) {
            (Some(features), Some(labels)) => Some(LabeledDataset {
                features: features.clone(),
                labels: Some(labels.clone()),
                grid_shape: None,
            }),
            _ => None,
        }
    }
}

/// Pretty JSON with every float rendered at 17 significant digits.
struct SigDigitFormatter {
    indent: usize,
}

impl SigDigitFormatter {
    fn new() -> Self {
        SigDigitFormatter { indent: 0 }
    }

    fn newline<W: ?Sized + Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writer.write_all(b"\n")?;
        for _ in 0..self.indent {
            writer.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for SigDigitFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        writer.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        writer.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        if !first {
            writer.write_all(b",")?;
        }
        self.newline(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent += 1;
        writer.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        self.indent -= 1;
        self.newline(writer)?;
        writer.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> std::io::Result<()> {
        if !first {
            writer.write_all(b",")?;
        }
        self.newline(writer)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> std::io::Result<()> {
        writer.write_all(b": ")
    }
}

/// Serializes any value with the 17-significant-digit float format.
pub fn to_json_17(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter::new());
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let json = to_json_17(checkpoint)?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::encoder::Activation;
    use crate::heads::{LossConfig, LossKind};
    use crate::optimizer::SgdConfig;
    use crate::train::{train, TrainOptions};

    fn trained_checkpoint() -> Checkpoint {
        let data = gen_blobs(3, 20, 2, 0.8, 1).unwrap();
        let spec = EncoderSpec {
            input_dim: 2,
            hidden_dims: vec![6],
            feature_dim: 4,
            activation: Activation::Tanh,
        };
        let opts = TrainOptions {
            epochs: 2,
            batch_size: 16,
            optimizer: SgdConfig::default(),
            seed: 3,
        };
        let outcome = train(
            spec.clone(),
            3,
            LossConfig::new(LossKind::IsoMaxPlus),
            &data,
            &opts,
        )
        .unwrap();
        Checkpoint {
            models: vec![ModelCheckpoint {
                name: "isomax_plus".to_string(),
                spec,
                classes: 3,
                params: outcome.model.params.clone(),
                optimizer_state: outcome.optimizer,
                epoch: 2,
                loss_config: outcome.model.loss,
                calibration: None,
            }],
            val_features: Some(data.features.clone()),
            val_labels: data.labels.clone(),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise_exact() {
        let dir = std::env::temp_dir().join("entropic_ood_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("checkpoint.json");

        let ckpt = trained_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();

        assert_eq!(back.models[0].params, ckpt.models[0].params);
        assert_eq!(
            back.models[0].optimizer_state,
            ckpt.models[0].optimizer_state
        );
        assert_eq!(back.val_features, ckpt.val_features);

        // saving again produces identical bytes
        let path2 = dir.join("checkpoint2.json");
        save_checkpoint(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn floats_use_seventeen_significant_digits() {
        let json = to_json_17(&vec![0.1f64]).unwrap();
        assert!(json.contains("1.0000000000000001e-1"), "got {json}");
    }
}
