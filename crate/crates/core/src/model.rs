//! Encoder plus head bundled into one trainable model, with the canonical
//! parameter ordering shared by the optimizer, the tape builders and the
//! checkpoint format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_features, init_layers, DenseLayer, EncoderSpec};
use crate::error::Result;
use crate::heads::{self, HeadParams, LossConfig};
use crate::matrix::{argmax_rows, Matrix};
use crate::seeding::derive_seed;

/// Name and weight-decay flag for one parameter tensor, aligned with
/// [`ModelParams::flatten`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub decay: bool,
}

/// All learnable tensors: encoder layers plus head parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
    pub head: HeadParams,
}

impl ModelParams {
    /// Canonical flat view: layer weights and biases in order, then the head
    /// tensors. Everything that consumes parameter lists uses this order.
    pub fn flatten(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.layers.len() * 2 + 2);
        for layer in &self.layers {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        match &self.head {
            HeadParams::Affine { weight, bias } => {
                out.push(weight);
                out.push(bias);
            }
            HeadParams::Prototypes { prototypes } => out.push(prototypes),
            HeadParams::ScaledPrototypes {
                prototypes,
                distance_scale,
            } => {
                out.push(prototypes);
                out.push(distance_scale);
            }
        }
        out
    }

    pub fn flatten_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(self.layers.len() * 2 + 2);
        for layer in &mut self.layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        match &mut self.head {
            HeadParams::Affine { weight, bias } => {
                out.push(weight);
                out.push(bias);
            }
            HeadParams::Prototypes { prototypes } => out.push(prototypes),
            HeadParams::ScaledPrototypes {
                prototypes,
                distance_scale,
            } => {
                out.push(prototypes);
                out.push(distance_scale);
            }
        }
        out
    }

    /// Weight decay covers every parameter except the distance scale.
    pub fn meta(&self) -> Vec<ParamMeta> {
        let mut out = Vec::with_capacity(self.layers.len() * 2 + 2);
        for (i, _) in self.layers.iter().enumerate() {
            out.push(ParamMeta {
                name: format!("layer{i}.weight"),
                decay: true,
            });
            out.push(ParamMeta {
                name: format!("layer{i}.bias"),
                decay: true,
            });
        }
        match &self.head {
            HeadParams::Affine { .. } => {
                out.push(ParamMeta {
                    name: "head.weight".to_string(),
                    decay: true,
                });
                out.push(ParamMeta {
                    name: "head.bias".to_string(),
                    decay: true,
                });
            }
            HeadParams::Prototypes { .. } => out.push(ParamMeta {
                name: "head.prototypes".to_string(),
                decay: true,
            }),
            HeadParams::ScaledPrototypes { .. } => {
                out.push(ParamMeta {
                    name: "head.prototypes".to_string(),
                    decay: true,
                });
                out.push(ParamMeta {
                    name: "head.distance_scale".to_string(),
                    decay: false,
                });
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|m| m.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: EncoderSpec,
    pub classes: usize,
    pub params: ModelParams,
    pub loss: LossConfig,
}

impl Model {
    /// Fresh model with seeded initialization. Encoder layers and head draw
    /// from independent streams so head kind does not perturb the encoder.
    pub fn new(encoder: EncoderSpec, classes: usize, loss: LossConfig, seed: u64) -> Result<Model> {
        encoder.validate()?;
        loss.validate()?;
        let mut enc_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0e));
        let layers = init_layers(&encoder, &mut enc_rng);
        let mut head_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0f));
        let head = heads::init_head(loss.kind, classes, encoder.feature_dim, &mut head_rng)?;
        Ok(Model {
            encoder,
            classes,
            params: ModelParams { layers, head },
            loss,
        })
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        encoder_features(&self.encoder, &self.params.layers, x)
    }

    /// Head logits with the entropic scale removed (the inference form).
    pub fn inference_logits(&self, x: &Matrix) -> Result<Matrix> {
        let features = self.features(x)?;
        heads::head_logits(self.loss.kind, &self.params.head, &features)
    }

    /// `softmax(logits / T)` at the configured inference temperature.
    pub fn inference_probabilities(&self, x: &Matrix) -> Result<Matrix> {
        let features = self.features(x)?;
        heads::inference_probabilities(self.loss.kind, &self.loss, &self.params.head, &features)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.inference_probabilities(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Activation;
    use crate::heads::LossKind;

    fn spec() -> EncoderSpec {
        EncoderSpec {
            input_dim: 3,
            hidden_dims: vec![6],
            feature_dim: 4,
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn flatten_order_is_stable_and_matches_meta() {
        for kind in [
            LossKind::Softmax,
            LossKind::IsoMax,
            LossKind::IsoMaxPlus,
            LossKind::DisMax,
        ] {
            let model = Model::new(spec(), 4, LossConfig::new(kind), 1).unwrap();
            let flat = model.params.flatten();
            let meta = model.params.meta();
            assert_eq!(flat.len(), meta.len());
            assert_eq!(meta[0].name, "layer0.weight");
            assert_eq!(meta[1].name, "layer0.bias");
            if kind == LossKind::IsoMaxPlus {
                assert_eq!(meta.last().unwrap().name, "head.distance_scale");
                assert!(!meta.last().unwrap().decay);
            }
        }
    }

    #[test]
    fn model_init_is_deterministic_per_seed() {
        let a = Model::new(spec(), 4, LossConfig::new(LossKind::IsoMaxPlus), 7).unwrap();
        let b = Model::new(spec(), 4, LossConfig::new(LossKind::IsoMaxPlus), 7).unwrap();
        let c = Model::new(spec(), 4, LossConfig::new(LossKind::IsoMaxPlus), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }
}
