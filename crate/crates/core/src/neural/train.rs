use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accumulate, loss, Dataset, DenseNetwork, Head};
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Fraction held out for validation; `floor(n · fraction)` examples.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be finite and > 0"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(invalid("validation_fraction", "must lie in (0, 1)"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(invalid("optimizer", "adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss on the held-out split (training split if nothing was held out).
    pub final_test_loss: f64,
    /// Held-out argmax accuracy, classifier only.
    pub accuracy: Option<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub wall_time_s: f64,
    pub n_train: usize,
    pub n_validation: usize,
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &x)| if x > best.1 { (k, x) } else { best })
        .0
}

pub fn accuracy(net: &DenseNetwork, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut hits = 0usize;
    for (x, y) in ds.inputs.iter().zip(&ds.targets) {
        if argmax(&net.forward(x)?) == argmax(y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

/// Mini-batch training. The train/validation split and the per-epoch
/// shuffles are drawn from streams derived from `cfg.seed`.
pub fn train(net: &DenseNetwork, dataset: &Dataset, cfg: &TrainConfig) -> Result<(DenseNetwork, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, "split"));
    let n_val = (dataset.len() as f64 * cfg.validation_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    if train_idx.is_empty() {
        return Err(Error::Empty("training split"));
    }

    let mut net = net.clone();
    let n_params = net.param_count();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut shuffle_rng = rng::stream(cfg.seed, "epochs");
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (grads, batch_loss) = accumulate(&net, dataset, chunk)?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss: batch_loss });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            step += 1;
            let lr = cfg.learning_rate;
            match cfg.optimizer {
                Optimizer::Sgd => net.apply(&grads, |_, p, g| p - lr * g),
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    net.apply(&grads, |k, p, g| {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                        p - lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps)
                    })
                }
            }
        }
        let mean = epoch_loss / train_idx.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: mean });
        }
        history.push(mean);
    }

    let held_out = if val_idx.is_empty() {
        dataset.subset(&train_idx)
    } else {
        dataset.subset(val_idx)
    };
    let final_test_loss = loss(&net, &held_out)?;
    if !final_test_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs,
            loss: final_test_loss,
        });
    }
    let accuracy = match net.head {
        Head::Classifier => Some(accuracy(&net, &held_out)?),
        Head::Regressor => None,
    };
    let report = TrainReport {
        final_test_loss,
        accuracy,
        loss_history: history,
        wall_time_s: start.elapsed().as_secs_f64(),
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
    };
    Ok((net, report))
}

/// Exhaustive search over hidden-layer layouts and learning rates, keeping
/// the lowest held-out loss. `build` creates a fresh network per layout.
pub fn grid_search(
    dataset: &Dataset,
    layouts: &[Vec<usize>],
    learning_rates: &[f64],
    base: &TrainConfig,
    build: impl Fn(&[usize]) -> Result<DenseNetwork>,
) -> Result<(Vec<usize>, f64, DenseNetwork, TrainReport)> {
    let mut best: Option<(Vec<usize>, f64, DenseNetwork, TrainReport)> = None;
    for layout in layouts {
        for &lr in learning_rates {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..*base
            };
            let (net, report) = train(&build(layout)?, dataset, &cfg)?;
            if best.as_ref().is_none_or(|b| report.final_test_loss < b.3.final_test_loss) {
                best = Some((layout.clone(), lr, net, report));
            }
        }
    }
    best.ok_or(Error::Empty("grid"))
}
