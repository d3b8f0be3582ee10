//! Fully connected ReLU network with a softmax output layer, trained by
//! mini-batch gradient descent on cross-entropy plus an L2 weight penalty.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, ModelParams, TrainedModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 60,
            learning_rate: 0.05,
            batch: 16,
            seed: 0,
            l2: 1e-4,
        }
    }
}

/// Weights `w[out][in]` stored row-major, plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

impl Network {
    /// He-initialized weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut r = rng::stream(seed, &[rng::TAG_TRAINER, 0]);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let sd = (2.0 / i.max(1) as f64).sqrt();
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut r);
                            sd * z
                        })
                        .collect::<Vec<f64>>(),
                    biases: vec![0.0; o],
                }
            })
            .collect();
        Self { layers }
    }

    /// Activations of every layer; the last entry holds class probabilities.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().expect("input pushed"), &mut z);
            if li + 1 == self.layers.len() {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.forward_all(x).pop().expect("at least the input")
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.probabilities(x))
    }

    /// All weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    /// Mean cross-entropy over the batch plus `l2/2 · Σ w²`, and its
    /// gradient in [`Self::parameters`] order.
    pub fn loss_and_gradient(&self, x: &[&[f64]], targets: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut loss = 0.0;
        let inv_n = 1.0 / x.len() as f64;
        for (xi, &t) in x.iter().zip(targets) {
            let acts = self.forward_all(xi);
            let probs = acts.last().expect("output layer");
            loss -= probs[t].max(f64::MIN_POSITIVE).ln();
            // dL/dz at the output: p - onehot
            let mut delta: Vec<f64> = probs.clone();
            delta[t] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.outputs {
                    let d = delta[o] * inv_n;
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        loss *= inv_n;
        let mut flat = Vec::new();
        for (layer, (gw, gb)) in self.layers.iter().zip(grads) {
            loss += 0.5 * l2 * layer.weights.iter().map(|w| w * w).sum::<f64>();
            flat.extend(gw.iter().zip(&layer.weights).map(|(g, w)| g + l2 * w));
            flat.extend(gb);
        }
        (loss, flat)
    }
}

pub fn train_network(data: &Dataset, cfg: &NetworkConfig) -> Result<TrainedModel> {
    if cfg.batch == 0 || !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(Error::invalid(
            "network needs batch >= 1, learning_rate > 0 and l2 >= 0",
        ));
    }
    if cfg.hidden.contains(&0) {
        return Err(Error::invalid("hidden layer widths must be positive"));
    }
    let mut sizes = vec![data.dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(data.class_set().len());
    let mut net = Network::init(&sizes, cfg.seed);
    let rows = data.rows();
    let targets = data.targets();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, &[rng::TAG_TRAINER, 1]);
    let mut params = net.parameters();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let xb: Vec<&[f64]> = chunk.iter().map(|&i| rows[i]).collect();
            let tb: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&xb, &tb, cfg.l2);
            epoch_loss += loss * chunk.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            net.set_parameters(&params);
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    Ok(TrainedModel::new(data, ModelParams::Network(net), vec![]))
}
