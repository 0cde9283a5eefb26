//! A small fully-connected network with scalar output.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Identity => z,
        }
    }

    // subgradient of ReLU at 0 is 0
    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }
}

/// Multilayer perceptron: hidden layers use `activation`, the output is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().flatten().zip(other.weights.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().flatten().zip(other.biases.iter().flatten()) {
            *a += b;
        }
    }
}

/// Pre-activations and activations recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[k+1]` the output of layer `k`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> f64 {
        self.activations.last().map_or(0.0, |a| a[0])
    }
}

impl Mlp {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::Config("network output width must be 1".into()));
        }
        Ok(())
    }

    /// All weights and biases zero; outputs 0 everywhere.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            activation,
        })
    }

    /// He-uniform weights, zero biases.
    pub fn random(sizes: &[usize], activation: Activation, rng: &mut crate::rng::Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        s.push(1);
        s
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if k < last {
                for z in &mut next {
                    *z = self.activation.apply(*z);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut activations = vec![input.to_vec()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward_into(activations.last().unwrap(), &mut z);
            let a = if k < last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace { activations, pre_activations })
    }

    /// Accumulate `d_output * d(output)/d(params)` into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, d_output: f64, grads: &mut Gradients) {
        if d_output == 0.0 {
            return;
        }
        let last = self.layers.len() - 1;
        let mut delta = vec![d_output];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k < last {
                for (d, z) in delta.iter_mut().zip(&trace.pre_activations[k]) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let input = &trace.activations[k];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[k][o] += d;
                let row = &mut grads.weights[k][o * layer.inputs..(o + 1) * layer.inputs];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Gradient of the output with respect to every parameter.
    pub fn output_gradient(&self, input: &[f64]) -> Result<Gradients> {
        let trace = self.forward_trace(input)?;
        let mut g = Gradients::zeros_like(self);
        self.backward(&trace, 1.0, &mut g);
        Ok(g)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Mutable references to every parameter in [`Gradients::flatten`] order.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}
