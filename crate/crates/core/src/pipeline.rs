//! End-to-end recipes shared by the command-line driver, the benches and
//! the acceptance suite. Every random stream is derived from one seed.

use serde::{Deserialize, Serialize};

use crate::dataset::{classifier_training_set, gen_classifier_dataset, gen_phase_dataset};
use crate::error::Result;
use crate::neural::{train, DenseNetwork, TrainConfig, TrainReport};
use crate::par::{self, Exec};
use crate::phase::{phase_grid, train_regressor};
use crate::recognition::{TraceSet, WINDOW_LEN};
use crate::rng;
use crate::sim::{synth_storage_retrieval, BitSequence, HahnTiming, SequenceTiming, SignalModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecipe {
    pub n_per_class: usize,
    pub window_len: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ClassifierRecipe {
    fn default() -> Self {
        Self {
            n_per_class: 6000,
            window_len: WINDOW_LEN,
            hidden: vec![32, 16],
            train: TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            },
        }
    }
}

pub fn train_classifier(
    recipe: &ClassifierRecipe,
    timing: &SequenceTiming,
    model: &SignalModel,
    seed: u64,
) -> Result<(DenseNetwork, TrainReport)> {
    let windows = gen_classifier_dataset(
        recipe.n_per_class,
        recipe.window_len,
        timing,
        model,
        rng::derive(seed, "classifier-data"),
    )?;
    let net = DenseNetwork::classifier(recipe.window_len, &recipe.hidden, rng::derive(seed, "classifier-init"))?;
    let cfg = TrainConfig {
        seed: rng::derive(seed, "classifier-train"),
        ..recipe.train
    };
    train(&net, &classifier_training_set(&windows), &cfg)
}

/// One noisy trace per sequence j = 0..15.
pub fn synth_trace_set(timing: &SequenceTiming, model: &SignalModel, seed: u64) -> Result<TraceSet> {
    let seqs: Vec<BitSequence> = BitSequence::all().collect();
    let traces = par::map(Exec::default(), &seqs, |s| {
        synth_storage_retrieval(s, timing, model, rng::derive(seed, &format!("trace-{}", s.decimal())))
    });
    seqs.iter().zip(traces).map(|(s, t)| Ok((s.decimal(), t?))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecipe {
    /// Spacing of the training sweep over [0, 360), degrees.
    pub step_deg: f64,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for PhaseRecipe {
    fn default() -> Self {
        Self {
            step_deg: 0.5,
            hidden: vec![64, 32],
            train: TrainConfig {
                epochs: 200,
                ..TrainConfig::default()
            },
        }
    }
}

pub fn train_phase(
    recipe: &PhaseRecipe,
    timing: &HahnTiming,
    model: &SignalModel,
    seed: u64,
) -> Result<(DenseNetwork, TrainReport)> {
    let sweep = phase_grid(0.0, 360.0, recipe.step_deg)?;
    let items = gen_phase_dataset(&sweep, timing, model, rng::derive(seed, "phase-data"))?;
    let cfg = TrainConfig {
        seed: rng::derive(seed, "phase-train"),
        ..recipe.train
    };
    train_regressor(&items, model.carrier_mhz, &recipe.hidden, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_set_is_complete_and_seeded() {
        let t = SequenceTiming::default();
        let m = SignalModel::default();
        let a = synth_trace_set(&t, &m, 9).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, synth_trace_set(&t, &m, 9).unwrap());
        assert_ne!(a[&5].samples, synth_trace_set(&t, &m, 10).unwrap()[&5].samples);
    }

    #[test]
    fn default_window_is_one_support() {
        assert_eq!(ClassifierRecipe::default().window_len, SignalModel::default().support_samples());
    }
}
