//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use echo_readout::neural::{backprop_gradients, loss, Activation, Dataset, DenseNetwork, Head, LayerSpec};

/// Optimal k=2 inertia by trying every cut of the sorted points.
pub fn exhaustive_two_means(points: &[f64]) -> f64 {
    let mut s = points.to_vec();
    s.sort_by(f64::total_cmp);
    let sse = |part: &[f64]| {
        if part.is_empty() {
            return 0.0;
        }
        let m = part.iter().sum::<f64>() / part.len() as f64;
        part.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    };
    (0..=s.len())
        .map(|cut| sse(&s[..cut]) + sse(&s[cut..]))
        .fold(f64::INFINITY, f64::min)
}

/// Prominence from its definition: for each side, the deepest dip one must
/// cross to reach higher ground, maximized over every higher sample.
pub fn brute_prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let left = (0..p)
        .filter(|&j| x[j] > h)
        .map(|j| x[j..=p].iter().copied().fold(f64::INFINITY, f64::min))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or_else(|| x[..=p].iter().copied().fold(f64::INFINITY, f64::min));
    let right = (p + 1..x.len())
        .filter(|&j| x[j] > h)
        .map(|j| x[p..=j].iter().copied().fold(f64::INFINITY, f64::min))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or_else(|| x[p..].iter().copied().fold(f64::INFINITY, f64::min));
    h - left.max(right)
}

pub struct GradCheck {
    pub coords: usize,
    pub max_rel_err: f64,
}

/// Central differences against backprop on every parameter of `net`.
pub fn gradient_check(net: &DenseNetwork, batch: &Dataset, h: f64) -> GradCheck {
    let analytic = backprop_gradients(net, batch).unwrap().flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for k in 0..net.param_count() {
        let p = net.param(k);
        probe.set_param(k, p + h);
        let up = loss(&probe, batch).unwrap();
        probe.set_param(k, p - h);
        let down = loss(&probe, batch).unwrap();
        probe.set_param(k, p);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    GradCheck {
        coords: net.param_count(),
        max_rel_err: worst,
    }
}

/// Small classifier and regressor with their batches for gradient checks.
pub fn grad_fixtures() -> Vec<(DenseNetwork, Dataset)> {
    let inputs: Vec<Vec<f64>> = (0..6)
        .map(|k| (0..7).map(|d| ((k * 7 + d) as f64 * 0.731).sin()).collect())
        .collect();
    let clf = DenseNetwork::init(
        Head::Classifier,
        &[
            LayerSpec::new(7, 9, Activation::Tanh),
            LayerSpec::new(9, 5, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Softmax),
        ],
        11,
    )
    .unwrap();
    let clf_batch = Dataset::new(
        inputs.clone(),
        (0..6).map(|k| echo_readout::neural::one_hot(k % 2 == 0)).collect(),
    )
    .unwrap();
    let reg = DenseNetwork::regressor(7, &[8, 6], 12).unwrap();
    let reg_batch = Dataset::new(
        inputs,
        (0..6).map(|k| vec![(k as f64).cos(), (k as f64).sin()]).collect(),
    )
    .unwrap();
    vec![(clf, clf_batch), (reg, reg_batch)]
}
