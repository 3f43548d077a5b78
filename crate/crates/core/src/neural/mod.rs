//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Weights are stored row-major as `fan_out × fan_in`. A classifier ends in a
//! width-2 softmax whose first component is the echo probability `p_e`; a
//! regressor ends in a linear layer.

mod model_file;
mod train;

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par::{self, Exec};
use crate::rng;

pub use model_file::{load_model, save_model};
pub use train::{accuracy, grid_search, train, Optimizer, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Classifier,
    Regressor,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::Classifier => "classifier",
            Head::Regressor => "regressor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            fan_in,
            fan_out,
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.fan_in, self.fan_out, self.activation)
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.fan_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

fn activate(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
        Activation::Linear => z.to_vec(),
        Activation::Softmax => softmax(z),
    }
}

/// Softmax. For two classes the second component is computed as `1 - p_0`,
/// so the pair sums to one exactly.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    if z.len() == 2 {
        let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
        return vec![p0, 1.0 - p0];
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Supervised examples: `inputs[k]` maps to `targets[k]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: idx.iter().map(|&k| self.inputs[k].clone()).collect(),
            targets: idx.iter().map(|&k| self.targets[k].clone()).collect(),
        }
    }

    pub fn extend(&mut self, other: Dataset) {
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
    }
}

/// One-hot target for a binary echo label: index 0 is echo, index 1 is noise.
pub fn one_hot(echo: bool) -> Vec<f64> {
    if echo {
        vec![1.0, 0.0]
    } else {
        vec![0.0, 1.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    pub head: Head,
    pub layers: Vec<Dense>,
}

impl DenseNetwork {
    /// Network with all parameters zero.
    pub fn zeros(head: Head, specs: &[LayerSpec]) -> Result<Self> {
        validate_specs(head, specs)?;
        let layers = specs
            .iter()
            .map(|s| Dense {
                fan_in: s.fan_in,
                fan_out: s.fan_out,
                activation: s.activation,
                weights: vec![0.0; s.fan_in * s.fan_out],
                bias: vec![0.0; s.fan_out],
            })
            .collect();
        Ok(Self { head, layers })
    }

    /// Seeded uniform initialization scaled by fan-in; biases start at zero.
    pub fn init(head: Head, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(head, specs)?;
        let mut rng = rng::stream(seed, "init");
        for layer in &mut net.layers {
            let gain = if layer.activation == Activation::Relu { 6.0 } else { 3.0 };
            let limit = (gain / layer.fan_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// `input → hidden… → 2` with relu hidden layers and a softmax head.
    pub fn classifier(input: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::init(Head::Classifier, &chain(input, hidden, Activation::Relu, Activation::Softmax), seed)
    }

    /// `input → hidden… → 2` with tanh hidden layers and a linear head.
    pub fn regressor(input: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::init(Head::Regressor, &chain(input, hidden, Activation::Tanh, Activation::Linear), seed)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self
            .layers
            .iter()
            .fold(input.to_vec(), |a, l| activate(l.activation, &l.pre_activation(&a))))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn check_target(&self, target: &[f64]) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for l in &self.layers {
            let a = activate(l.activation, &l.pre_activation(acts.last().expect("non-empty")));
            acts.push(a);
        }
        acts
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter `idx` in flat order: per layer, weights then biases.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, k) = self.locate(idx);
        let layer = &self.layers[l];
        if k < layer.weights.len() {
            layer.weights[k]
        } else {
            layer.bias[k - layer.weights.len()]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (l, k) = self.locate(idx);
        let layer = &mut self.layers[l];
        let nw = layer.weights.len();
        if k < nw {
            layer.weights[k] = value;
        } else {
            layer.bias[k - nw] = value;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.weights.len() + layer.bias.len();
            if idx < n {
                return (l, idx);
            }
            idx -= n;
        }
        panic!("parameter index out of range");
    }

    fn apply(&mut self, grads: &Gradients, mut step: impl FnMut(usize, f64, f64) -> f64) {
        let mut idx = 0;
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w = step(idx, *w, *g);
                idx += 1;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b = step(idx, *b, *g);
                idx += 1;
            }
        }
    }
}

fn chain(input: usize, hidden: &[usize], hidden_act: Activation, out_act: Activation) -> Vec<LayerSpec> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(2);
    dims.windows(2)
        .enumerate()
        .map(|(k, d)| {
            let act = if k + 2 == dims.len() { out_act } else { hidden_act };
            LayerSpec::new(d[0], d[1], act)
        })
        .collect()
}

fn validate_specs(head: Head, specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Empty("layer list"));
    }
    for (k, s) in specs.iter().enumerate() {
        if s.fan_in == 0 || s.fan_out == 0 {
            return Err(invalid("layers", format!("layer {k} has a zero dimension")));
        }
        if s.activation == Activation::Softmax && k + 1 != specs.len() {
            return Err(invalid("layers", "softmax is only allowed on the final layer"));
        }
        if k > 0 && specs[k - 1].fan_out != s.fan_in {
            return Err(invalid(
                "layers",
                format!("layer {k} fan_in {} does not chain from {}", s.fan_in, specs[k - 1].fan_out),
            ));
        }
    }
    let last = specs[specs.len() - 1];
    match head {
        Head::Classifier if last.activation != Activation::Softmax || last.fan_out != 2 => Err(invalid(
            "layers",
            "classifier head must end in a width-2 softmax",
        )),
        Head::Regressor if last.activation != Activation::Linear || last.fan_out != 2 => Err(invalid(
            "layers",
            "regressor head must end in a width-2 linear layer",
        )),
        _ => Ok(()),
    }
}

/// Per-layer `(weights, bias)` gradients, laid out like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    /// Flat view in the same order as [`DenseNetwork::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

fn sample_loss(head: Head, out: &[f64], target: &[f64]) -> f64 {
    match head {
        Head::Classifier => -target
            .iter()
            .zip(out)
            .filter(|(y, _)| **y > 0.0)
            .map(|(y, p)| y * p.max(f64::MIN_POSITIVE).ln())
            .sum::<f64>(),
        Head::Regressor => {
            out.iter().zip(target).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / out.len() as f64
        }
    }
}

/// Mean cross-entropy (classifier) or mean squared error (regressor).
pub fn loss(net: &DenseNetwork, batch: &Dataset) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        net.check_target(y)?;
        total += sample_loss(net.head, &net.forward(x)?, y);
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`loss`] with respect to every weight and bias.
pub fn backprop_gradients(net: &DenseNetwork, batch: &Dataset) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    accumulate(net, batch, &idx).map(|(g, _)| g)
}

/// Mean-loss gradient and mean loss over `batch[idx]`.
pub(crate) fn accumulate(net: &DenseNetwork, batch: &Dataset, idx: &[usize]) -> Result<(Gradients, f64)> {
    let mut grads = Gradients::zeros_like(net);
    let scale = 1.0 / idx.len() as f64;
    let mut total = 0.0;
    for &k in idx {
        let (x, y) = (&batch.inputs[k], &batch.targets[k]);
        net.check_input(x)?;
        net.check_target(y)?;
        let acts = net.forward_trace(x);
        let out = acts.last().expect("output layer");
        total += sample_loss(net.head, out, y);

        let last = &net.layers[net.layers.len() - 1];
        let mut delta: Vec<f64> = match (net.head, last.activation) {
            // Softmax with cross-entropy collapses to p - y.
            (Head::Classifier, Activation::Softmax) => out.iter().zip(y).map(|(p, t)| p - t).collect(),
            _ => {
                let m = out.len() as f64;
                let d_out: Vec<f64> = match net.head {
                    Head::Regressor => out.iter().zip(y).map(|(o, t)| 2.0 * (o - t) / m).collect(),
                    Head::Classifier => out
                        .iter()
                        .zip(y)
                        .map(|(p, t)| if *t > 0.0 { -t / p.max(f64::MIN_POSITIVE) } else { 0.0 })
                        .collect(),
                };
                derivative(last.activation, out, &d_out)
            }
        };

        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let input = &acts[l];
            let (gw, gb) = &mut grads.layers[l];
            for (r, d) in delta.iter().enumerate() {
                let d = d * scale;
                gb[r] += d;
                for (g, a) in gw[r * layer.fan_in..(r + 1) * layer.fan_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let mut back = vec![0.0; layer.fan_in];
                for (r, d) in delta.iter().enumerate() {
                    for (b, w) in back.iter_mut().zip(&layer.weights[r * layer.fan_in..(r + 1) * layer.fan_in]) {
                        *b += w * d;
                    }
                }
                delta = derivative(net.layers[l - 1].activation, &acts[l], &back);
            }
        }
    }
    Ok((grads, total * scale))
}

/// Chain rule through an elementwise activation, given its output `a`.
fn derivative(act: Activation, a: &[f64], upstream: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => a
            .iter()
            .zip(upstream)
            .map(|(a, u)| if *a > 0.0 { *u } else { 0.0 })
            .collect(),
        Activation::Tanh => a.iter().zip(upstream).map(|(a, u)| u * (1.0 - a * a)).collect(),
        Activation::Linear => upstream.to_vec(),
        Activation::Softmax => {
            let dot: f64 = a.iter().zip(upstream).map(|(a, u)| a * u).sum();
            a.iter().zip(upstream).map(|(a, u)| a * (u - dot)).collect()
        }
    }
}

pub fn predict_batch(net: &DenseNetwork, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    predict_batch_with(Exec::default(), net, inputs)
}

pub fn predict_batch_with(exec: Exec, net: &DenseNetwork, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    par::map(exec, inputs, |x| net.forward(x)).into_iter().collect()
}

/// Sequential batch prediction recording the latency of every window.
pub fn predict_batch_timed(net: &DenseNetwork, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Duration>)> {
    let mut outs = Vec::with_capacity(inputs.len());
    let mut lat = Vec::with_capacity(inputs.len());
    for x in inputs {
        let start = Instant::now();
        outs.push(net.forward(x)?);
        lat.push(start.elapsed());
    }
    Ok((outs, lat))
}

pub fn median_duration(durations: &[Duration]) -> Duration {
    let mut d = durations.to_vec();
    d.sort();
    if d.is_empty() {
        Duration::ZERO
    } else {
        d[d.len() / 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_classifier_is_uniform() {
        let net = DenseNetwork::zeros(
            Head::Classifier,
            &[LayerSpec::new(3, 4, Activation::Relu), LayerSpec::new(4, 2, Activation::Softmax)],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = DenseNetwork::zeros(Head::Regressor, &[LayerSpec::new(2, 2, Activation::Linear)]).unwrap();
        net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(net.forward(&[0.25, -7.5]).unwrap(), vec![0.25, -7.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = DenseNetwork::classifier(4, &[3], 1).unwrap();
        assert!(matches!(net.forward(&[0.0; 3]), Err(Error::DimensionMismatch { expected: 4, got: 3 })));
    }

    #[test]
    fn softmax_only_last() {
        let bad = DenseNetwork::zeros(
            Head::Classifier,
            &[LayerSpec::new(2, 2, Activation::Softmax), LayerSpec::new(2, 2, Activation::Softmax)],
        );
        assert!(bad.is_err());
        let unchained = DenseNetwork::zeros(
            Head::Regressor,
            &[LayerSpec::new(2, 3, Activation::Tanh), LayerSpec::new(4, 2, Activation::Linear)],
        );
        assert!(unchained.is_err());
    }

    #[test]
    fn analytic_losses() {
        let zero = DenseNetwork::zeros(Head::Classifier, &[LayerSpec::new(1, 2, Activation::Softmax)]).unwrap();
        let ds = Dataset::new(vec![vec![0.3]], vec![one_hot(true)]).unwrap();
        assert!((loss(&zero, &ds).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        // Saturated logits reproduce the one-hot truth: zero loss.
        let mut sure = zero.clone();
        sure.layers[0].bias = vec![800.0, -800.0];
        assert_eq!(loss(&sure, &ds).unwrap(), 0.0);

        let mut reg = DenseNetwork::zeros(Head::Regressor, &[LayerSpec::new(1, 2, Activation::Linear)]).unwrap();
        reg.layers[0].bias = vec![0.6, -0.1];
        let ds = Dataset::new(vec![vec![1.0]], vec![vec![0.5, 0.0]]).unwrap();
        assert!((loss(&reg, &ds).unwrap() - 0.01).abs() < 1e-12);
        assert!(loss(&reg, &Dataset::default()).is_err());
    }

    #[test]
    fn perfect_regressor_has_zero_gradient() {
        let mut reg = DenseNetwork::zeros(Head::Regressor, &[LayerSpec::new(2, 2, Activation::Linear)]).unwrap();
        reg.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        let ds = Dataset::new(vec![vec![0.5, 0.2], vec![-1.0, 3.0]], vec![vec![0.5, 0.2], vec![-1.0, 3.0]]).unwrap();
        assert!(backprop_gradients(&reg, &ds).unwrap().flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_sample_gradient_equals_single() {
        let net = DenseNetwork::regressor(3, &[5], 9).unwrap();
        let x = vec![0.1, -0.4, 0.9];
        let y = vec![0.3, -0.8];
        let one = Dataset::new(vec![x.clone()], vec![y.clone()]).unwrap();
        let two = Dataset::new(vec![x.clone(), x], vec![y.clone(), y]).unwrap();
        let g1 = backprop_gradients(&net, &one).unwrap().flat();
        let g2 = backprop_gradients(&net, &two).unwrap().flat();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn batch_of_one_and_permutation() {
        let net = DenseNetwork::classifier(4, &[6, 3], 5).unwrap();
        let xs: Vec<Vec<f64>> = (0..7).map(|k| (0..4).map(|c| ((k * 4 + c) as f64).sin()).collect()).collect();
        let single = predict_batch(&net, &xs[..1]).unwrap();
        assert_eq!(single[0], net.forward(&xs[0]).unwrap());
        let out = predict_batch(&net, &xs).unwrap();
        let mut rev = xs.clone();
        rev.reverse();
        let mut out_rev = predict_batch(&net, &rev).unwrap();
        out_rev.reverse();
        assert_eq!(out, out_rev);
        let seq = predict_batch_with(Exec::Sequential, &net, &xs).unwrap();
        assert_eq!(out, seq);
    }
}
