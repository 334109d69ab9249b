//! Small dense feed-forward encoder producing the feature vectors the loss
//! heads classify. Hidden layers use the configured activation; the feature
//! layer itself is linear so features can occupy all of R^F.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::tape::{GradTape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.feature_dim < 1 || self.hidden_dims.iter().any(|&d| d < 1) {
            return Err(Error::contract("encoder dimensions must all be >= 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, input through hidden dims to the
    /// feature layer. Zero hidden layers yields a single linear map.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.feature_dim));
        dims
    }
}

/// One dense layer; `weight` is `fan_in x fan_out`, `bias` is `1 x fan_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Symmetric-uniform layer init in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
pub fn init_layers(spec: &EncoderSpec, rng: &mut impl Rng) -> Vec<DenseLayer> {
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            DenseLayer {
                weight: Matrix::new_unchecked(fan_in, fan_out, data),
                bias: Matrix::zeros(1, fan_out),
            }
        })
        .collect()
}

fn check_input(spec: &EncoderSpec, layers: &[DenseLayer], x: &Matrix) -> Result<()> {
    if x.cols() != spec.input_dim {
        return Err(Error::shape(
            "encoder_forward",
            format!("input dim {}", spec.input_dim),
            format!("{}", x.cols()),
        ));
    }
    if layers.len() != spec.hidden_dims.len() + 1 {
        return Err(Error::shape(
            "encoder_forward",
            format!("{} layers", spec.hidden_dims.len() + 1),
            format!("{}", layers.len()),
        ));
    }
    for (layer, (fan_in, fan_out)) in layers.iter().zip(spec.layer_dims()) {
        if layer.weight.shape() != (fan_in, fan_out) || layer.bias.shape() != (1, fan_out) {
            return Err(Error::shape(
                "encoder_forward",
                format!("layer {fan_in}x{fan_out}"),
                format!("{}x{}", layer.weight.rows(), layer.weight.cols()),
            ));
        }
    }
    Ok(())
}

/// Forward pass recorded on the tape. `layer_vars` are `(weight, bias)` leafs
/// in layer order.
pub fn encoder_forward(
    spec: &EncoderSpec,
    layer_vars: &[(Var, Var)],
    x: Var,
    tape: &GradTape,
) -> Var {
    let last = layer_vars.len() - 1;
    let mut h = x;
    for (i, &(w, b)) in layer_vars.iter().enumerate() {
        let lin = tape.matmul(h, w);
        h = tape.add_row_broadcast(lin, b);
        if i < last {
            h = match spec.activation {
                Activation::Relu => tape.relu(h),
                Activation::Tanh => tape.tanh(h),
            };
        }
    }
    h
}

/// Plain-value forward pass (inference path); same arithmetic as the taped one.
pub fn encoder_features(spec: &EncoderSpec, layers: &[DenseLayer], x: &Matrix) -> Result<Matrix> {
    check_input(spec, layers, x)?;
    let last = layers.len() - 1;
    let mut h = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        h = matrix::add_row_broadcast(&matrix::matmul(&h, &layer.weight), &layer.bias);
        if i < last {
            h = match spec.activation {
                Activation::Relu => matrix::relu(&h),
                Activation::Tanh => matrix::tanh(&h),
            };
        }
    }
    Ok(h)
}
