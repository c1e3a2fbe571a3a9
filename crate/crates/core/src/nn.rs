//! Dense feed-forward networks with exact backpropagation.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Hidden layers share one
//! activation; the output layer is linear and produces logits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Architecture of an [`MlpModel`]: layer widths (input first, logits last) and the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a model needs at least an input and an output layer, got sizes {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Σ_l (n_l + 1) · n_{l+1}
    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

/// Buffers shaped exactly like the parameters of a model. Used for gradients and for
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for block in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            block.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum();
        libm::sqrt(sq)
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            block.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Name of the first parameter block holding a NaN or infinity.
    pub fn first_non_finite_block(&self) -> Option<alloc::string::String> {
        for (l, w) in self.weights.iter().enumerate() {
            if w.iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {} weights", l + 1));
            }
            if self.biases[l].iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {} biases", l + 1));
            }
        }
        None
    }

    pub fn matches(&self, model: &MlpModel) -> bool {
        self.weights.len() == model.weights.len()
            && self.weights.iter().zip(&model.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&model.biases).all(|(a, b)| a.len() == b.len())
    }

    /// Flattened in the same order as [`MlpModel::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[L]` the logits.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation of every layer; the last entry equals the logits.
    pub pre_activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("non-empty trace")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (weights, biases) = spec
            .layer_sizes
            .windows(2)
            .map(|w| (vec![0.0; w[0] * w[1]], vec![0.0; w[1]]))
            .unzip();
        Ok(Self {
            layer_sizes: spec.layer_sizes.clone(),
            activation: spec.activation,
            weights,
            biases,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        for (l, w) in model.weights.iter_mut().enumerate() {
            let fan_in = spec.layer_sizes[l] as f64;
            let fan_out = spec.layer_sizes[l + 1] as f64;
            let limit = libm::sqrt(6.0 / (fan_in + fan_out));
            for x in w.iter_mut() {
                *x = rng.random_range(-limit..=limit);
            }
        }
        Ok(model)
    }

    pub fn from_parts(spec: &ModelSpec, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_sizes.len() - 1;
        check_len("weight blocks", layers, weights.len())?;
        check_len("bias blocks", layers, biases.len())?;
        for (l, pair) in spec.layer_sizes.windows(2).enumerate() {
            check_len("layer weights", pair[0] * pair[1], weights[l].len())?;
            check_len("layer biases", pair[1], biases[l].len())?;
        }
        Ok(Self {
            layer_sizes: spec.layer_sizes.clone(),
            activation: spec.activation,
            weights,
            biases,
        })
    }

    /// Rebuilds a model from the layout produced by [`MlpModel::flatten`].
    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        check_len("flat parameters", spec.param_count(), flat.len())?;
        let mut at = 0;
        for (w, b) in model.weights.iter_mut().zip(model.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(model)
    }

    /// Layers concatenated, each as row-major weights followed by biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated model")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("model input", self.input_dim(), input.len())?;
        let mut a = input.to_vec();
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let mut z = self.affine(l, &a);
            if l != last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that keeps every intermediate value for [`MlpModel::accumulate_backward`].
    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        check_len("model input", self.input_dim(), input.len())?;
        let layers = self.n_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre_activations = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        for l in 0..layers {
            let z = self.affine(l, &activations[l]);
            let a = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre_activations,
        })
    }

    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let n_in = self.layer_sizes[l];
        self.weights[l]
            .chunks_exact(n_in)
            .zip(&self.biases[l])
            .map(|(row, b)| row.iter().zip(a).fold(*b, |acc, (w, x)| acc + w * x))
            .collect()
    }

    /// Gradient of `loss ∘ forward` given `dL/dlogits`.
    pub fn backward(&self, input: &[f64], logit_grad: &[f64]) -> Result<Gradients> {
        let trace = self.trace(input)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(&trace, logit_grad, &mut grads, 1.0)?;
        Ok(grads)
    }

    /// Adds `scale · ∂L/∂θ` into `grads`.
    pub fn accumulate_backward(
        &self,
        trace: &Trace,
        logit_grad: &[f64],
        grads: &mut Gradients,
        scale: f64,
    ) -> Result<()> {
        check_len("logit gradient", self.output_dim(), logit_grad.len())?;
        if !grads.matches(self) {
            return Err(Error::Shape {
                what: "gradient buffers",
                expected: self.param_count(),
                got: grads.flatten().len(),
            });
        }
        let mut delta: Vec<f64> = logit_grad.iter().map(|g| g * scale).collect();
        for l in (0..self.n_layers()).rev() {
            let n_in = self.layer_sizes[l];
            let a_prev = &trace.activations[l];
            for (row, d) in grads.weights[l].chunks_exact_mut(n_in).zip(&delta) {
                if *d != 0.0 {
                    row.iter_mut().zip(a_prev).for_each(|(g, x)| *g += d * x);
                }
            }
            grads.biases[l].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if l == 0 {
                break;
            }
            let mut back = vec![0.0; n_in];
            for (row, d) in self.weights[l].chunks_exact(n_in).zip(&delta) {
                if *d != 0.0 {
                    back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                }
            }
            let z = &trace.pre_activations[l - 1];
            let a = &trace.activations[l];
            for ((b, &zi), &ai) in back.iter_mut().zip(z).zip(a) {
                *b *= self.activation.derivative(zi, ai);
            }
            delta = back;
        }
        Ok(())
    }
}
