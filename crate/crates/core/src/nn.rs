//! A small fully-connected network and RMSProp optimizer, sufficient for
//! action-value approximation: dense layers, ReLU hidden units, a linear
//! output per action, and hand-derived backpropagation for the squared
//! temporal-difference loss of a single selected output.
//!
//! Everything is `f64`. Backprop treats the training target as a constant,
//! so the gradient flows only through the selected output unit.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input length {got} does not match the network input width {want}")]
    InputShape { got: usize, want: usize },
    #[error("output index {got} out of range for {want} outputs")]
    OutputIndex { got: usize, want: usize },
    #[error("gradient shape does not match the network")]
    GradientShape,
    #[error("non-finite {0} encountered; halting")]
    NonFinite(&'static str),
}

/// One dense layer, row-major weights: `w[row * cols + col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn he_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / cols as f64).sqrt();
        let w = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Self { rows, cols, w, b: vec![0.0; rows] }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.rows {
            let weights = &self.w[row * self.cols..(row + 1) * self.cols];
            let mut acc = self.b[row];
            for (w, x) in weights.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Feedforward network: ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer weight and bias gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, o) in w.iter_mut().zip(ow) {
                *a += o;
            }
            for (a, o) in b.iter_mut().zip(ob) {
                *a += o;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            for a in w.iter_mut() {
                *a *= factor;
            }
            for a in b.iter_mut() {
                *a *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }
}

/// Result of one backward pass.
#[derive(Debug)]
pub struct BackwardResult {
    pub grad: Gradient,
    /// The selected output's value before the update.
    pub q_value: f64,
    /// Squared-error loss against the target, halved.
    pub loss: f64,
}

impl Mlp {
    /// He-uniform weights, zero biases. `sizes` lists every layer width,
    /// input first.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need an input and an output layer");
        let mut rng = seeds::stream(seed, &[seeds::tag::NET_INIT]);
        let layers = sizes
            .windows(2)
            .map(|w| Dense::he_uniform(w[1], w[0], &mut rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        Self { layers: sizes.windows(2).map(|w| Dense::zeros(w[1], w[0])).collect() }
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_len()];
        sizes.extend(self.layers.iter().map(|l| l.rows));
        sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// One action value per output unit.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        if input.len() != self.input_len() {
            return Err(NetError::InputShape { got: input.len(), want: self.input_len() });
        }
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&current, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Forward pass keeping every layer's pre-activation and activation.
    fn forward_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let last = self.layers.len() - 1;
        let mut activations = vec![input.to_vec()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(activations.last().unwrap(), &mut z);
            pre_activations.push(z.clone());
            if i != last {
                for v in z.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(z);
        }
        (activations, pre_activations)
    }

    /// Gradient of `0.5 * (target - q(input)[action])^2` with respect to
    /// every parameter; the target is treated as a constant.
    pub fn backward(
        &self,
        input: &[f64],
        action: usize,
        target: f64,
    ) -> Result<BackwardResult, NetError> {
        if input.len() != self.input_len() {
            return Err(NetError::InputShape { got: input.len(), want: self.input_len() });
        }
        if action >= self.output_len() {
            return Err(NetError::OutputIndex { got: action, want: self.output_len() });
        }
        let (activations, pre_activations) = self.forward_trace(input);
        let q_value = activations.last().unwrap()[action];
        let loss = 0.5 * (target - q_value) * (target - q_value);

        let mut grad = Gradient::zeros_like(self);
        // Seed with dL/dq on the selected output only.
        let mut delta = vec![0.0; self.output_len()];
        delta[action] = q_value - target;

        for layer_idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[layer_idx];
            let input_acts = &activations[layer_idx];
            let (gw, gb) = &mut grad.layers[layer_idx];
            for row in 0..layer.rows {
                let d = delta[row];
                if d != 0.0 {
                    gb[row] = d;
                    let gw_row = &mut gw[row * layer.cols..(row + 1) * layer.cols];
                    for (g, a) in gw_row.iter_mut().zip(input_acts) {
                        *g = d * a;
                    }
                }
            }
            if layer_idx == 0 {
                break;
            }
            // Propagate through the weights, then through the ReLU of the
            // previous layer's pre-activation.
            let mut prev = vec![0.0; layer.cols];
            for row in 0..layer.rows {
                let d = delta[row];
                if d != 0.0 {
                    let weights = &layer.w[row * layer.cols..(row + 1) * layer.cols];
                    for (p, w) in prev.iter_mut().zip(weights) {
                        *p += d * w;
                    }
                }
            }
            for (p, z) in prev.iter_mut().zip(&pre_activations[layer_idx - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(BackwardResult { grad, q_value, loss })
    }
}

/// RMSProp state: a decayed accumulator of squared gradients per parameter.
///
/// Update: `acc <- rho * acc + (1 - rho) * g^2`, then
/// `theta <- theta - lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    acc: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RmsProp {
    pub fn new(net: &Mlp, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        assert!(learning_rate > 0.0 && learning_rate <= 1.0);
        assert!((0.0..1.0).contains(&decay));
        Self {
            learning_rate,
            decay,
            epsilon,
            acc: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &Gradient) -> Result<(), NetError> {
        if grad.layers.len() != self.acc.len() {
            return Err(NetError::GradientShape);
        }
        if !grad.is_finite() {
            return Err(NetError::NonFinite("gradient"));
        }
        for ((layer, (aw, ab)), (gw, gb)) in
            net.layers.iter_mut().zip(&mut self.acc).zip(&grad.layers)
        {
            if gw.len() != layer.w.len() || gb.len() != layer.b.len() {
                return Err(NetError::GradientShape);
            }
            for ((w, a), g) in layer.w.iter_mut().zip(aw.iter_mut()).zip(gw) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *w -= self.learning_rate * g / (a.sqrt() + self.epsilon);
            }
            for ((b, a), g) in layer.b.iter_mut().zip(ab.iter_mut()).zip(gb) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *b -= self.learning_rate * g / (a.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
