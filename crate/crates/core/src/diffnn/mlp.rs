use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::{affine, Tensor};
use super::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

/// One fully connected layer: `weight` is `[fan_in, fan_out]`, `bias` is `[1, fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Feed-forward network with a hidden activation and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    activation: Activation,
}

/// Parameter handles of an [`Mlp`] recorded on a tape, in [`Mlp::params`] order.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub output: Var,
    pub params: Vec<Var>,
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self, DiffError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(DiffError::InvalidLayers(layer_sizes.to_vec()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, weights).expect("sized"),
                    bias: Tensor::zeros(vec![1, fan_out]),
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            activation: Activation::Relu,
        })
    }

    /// Builds a network from explicit layers; consecutive dimensions must agree.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, DiffError> {
        let Some(first) = layers.first() else {
            return Err(DiffError::InvalidLayers(vec![]));
        };
        let mut sizes = vec![first.weight.rows()];
        for layer in &layers {
            let (fan_in, fan_out) = (layer.weight.rows(), layer.weight.cols());
            if fan_in != *sizes.last().unwrap() || layer.bias.len() != fan_out {
                sizes.push(fan_out);
                return Err(DiffError::InvalidLayers(sizes));
            }
            sizes.push(fan_out);
        }
        Ok(Self {
            layer_sizes: sizes,
            layers,
            activation: Activation::Relu,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), DiffError> {
        if input.cols() != self.input_size() {
            return Err(DiffError::ShapeMismatch {
                op: "mlp input",
                left: input.shape().to_vec(),
                right: vec![self.input_size()],
            });
        }
        Ok(())
    }

    /// Records the forward pass on `tape`. With `trainable` false the
    /// parameters are constants and receive no gradient.
    pub fn forward(&self, tape: &mut Tape, input: Var, trainable: bool) -> Result<MlpVars, DiffError> {
        self.check_input(tape.value(input))?;
        let mut h = input;
        let mut params = Vec::with_capacity(self.layers.len() * 2);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b) = if trainable {
                (tape.param(layer.weight.clone()), tape.param(layer.bias.clone()))
            } else {
                (tape.constant(layer.weight.clone()), tape.constant(layer.bias.clone()))
            };
            params.push(w);
            params.push(b);
            h = tape.affine(h, w, Some(b))?;
            if i != last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Ok(MlpVars { output: h, params })
    }

    /// Forward pass without recording a graph.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, DiffError> {
        self.check_input(input)?;
        let rows = input.rows();
        let mut h = input.values().to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (inner, cols) = (layer.weight.rows(), layer.weight.cols());
            h = affine(&h, layer.weight.values(), Some(layer.bias.values()), rows, inner, cols);
            if i != last {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let out = Tensor::matrix(rows, self.output_size(), h)?;
        if !out.is_finite() {
            return Err(DiffError::NonFinite("mlp output"));
        }
        Ok(out)
    }
}
