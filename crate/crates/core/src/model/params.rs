use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{xavier_init, Matrix};

/// Activation applied by the output layer. Hidden layers always use tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// No output nonlinearity; turns a two-layer model into plain matrix factorization.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Weights `K_l x K_{l-1}` and bias `K_l` of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Xavier-initialized weights and zero bias.
    pub fn xavier<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Layer {
            weights: xavier_init(out_dim, in_dim, rng)?,
            bias: vec![0.0; out_dim],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Layer::zeros(self.out_dim(), self.in_dim())
    }

    pub fn fill(&mut self, value: f64) {
        self.weights.fill(value);
        self.bias.iter_mut().for_each(|b| *b = value);
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &Layer) {
        crate::linalg::axpy(scale, other.weights.as_slice(), self.weights.as_mut_slice());
        crate::linalg::axpy(scale, &other.bias, &mut self.bias);
    }

    pub fn buffers(&self) -> [&[f64]; 2] {
        [self.weights.as_slice(), &self.bias]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }

    fn is_finite(&self) -> bool {
        self.weights.as_slice().iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Parameters of an `L`-layer autoencoder with dims `[N, K_1, ..., K_{L-1}, N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layers: Vec<Layer>,
    #[serde(default)]
    output_activation: Activation,
}

impl ModelParams {
    /// `hidden` lists `K_1 .. K_{L-1}`; input and output width is `num_items`.
    pub fn new<R: Rng + ?Sized>(num_items: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(num_items);
        dims.extend_from_slice(hidden);
        dims.push(num_items);
        let layers = dims
            .windows(2)
            .map(|w| Layer::xavier(w[1], w[0], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            layers,
            output_activation: Activation::Tanh,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, output_activation: Activation) -> Result<Self> {
        let params = ModelParams {
            layers,
            output_activation,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 layers, found {}",
                self.layers.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Dimension(format!(
                    "layer {} bias has {} entries for {} outputs",
                    l,
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if l > 0 && self.layers[l - 1].out_dim() != layer.in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    l,
                    layer.in_dim(),
                    l - 1,
                    self.layers[l - 1].out_dim()
                )));
            }
            if !layer.is_finite() {
                return Err(Error::Numeric(format!("layer {} has non-finite parameters", l)));
            }
        }
        if self.layers[0].in_dim() != self.layers.last().unwrap().out_dim() {
            return Err(Error::Dimension(
                "input and output widths must both equal the item count".into(),
            ));
        }
        Ok(())
    }

    pub fn with_output_activation(mut self, activation: Activation) -> Self {
        self.output_activation = activation;
        self
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// `[N, K_1, ..., K_{L-1}, N]`
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_items(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Layer {
        &mut self.layers[l]
    }

    /// Gradient buffers shaped like the parameters, all zero.
    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    /// Every scalar parameter, layer by layer (weights then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_parameters()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for buf in layer.buffers_mut() {
                buf.copy_from_slice(&values[offset..offset + buf.len()]);
                offset += buf.len();
            }
        }
        Ok(())
    }
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zero(&mut self) {
        self.layers.iter_mut().for_each(|l| l.fill(0.0));
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(1.0, b);
        }
    }
}
