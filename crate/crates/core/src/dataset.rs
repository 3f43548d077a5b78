//! Seeded training sets for the echo classifier and the phase regressor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::neural::{one_hot, Dataset};
use crate::par::{self, Exec};
use crate::phase::{extract_echo_window, PhaseItem};
use crate::rng;
use crate::signal::{dynamic_range, min_max_normalize};
use crate::sim::{echo_schedule, synth_hahn, synth_storage_retrieval, BitSequence, HahnTiming, SequenceTiming, SignalModel};

pub const ECHO: u8 = 1;
pub const NOISE: u8 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    /// Min-max normalized samples.
    pub window: Vec<f64>,
    pub label: u8,
    /// max − min of the window before normalization.
    pub raw_range: f64,
}

/// Balanced echo/noise windows cut from freshly synthesized traces.
///
/// Trace `k` carries a random non-empty sequence and yields one window of
/// each class: an echo window whose center is offset from a random ON echo
/// by at most `env_sigma` (density proportional to the offset), and a noise
/// window lying entirely outside every echo support.
pub fn gen_classifier_dataset(
    n_per_class: usize,
    window_len: usize,
    timing: &SequenceTiming,
    model: &SignalModel,
    rng_seed: u64,
) -> Result<Vec<LabeledWindow>> {
    timing.validate()?;
    model.validate()?;
    if window_len == 0 {
        return Err(invalid("window_len", "must be at least 1"));
    }
    let pairs = par::map_range(Exec::default(), n_per_class, |k| {
        window_pair(k, window_len, timing, model, rng_seed)
    });
    let mut out = Vec::with_capacity(2 * n_per_class);
    for pair in pairs {
        let (echo, noise) = pair?;
        out.push(echo);
        out.push(noise);
    }
    Ok(out)
}

fn window_pair(
    k: usize,
    window_len: usize,
    timing: &SequenceTiming,
    model: &SignalModel,
    seed: u64,
) -> Result<(LabeledWindow, LabeledWindow)> {
    let mut rng = rng::stream(seed, &format!("clf-pair-{k}"));
    let seq = BitSequence::from_decimal(rng.random_range(1..16u8))?;
    let trace = synth_storage_retrieval(&seq, timing, model, rng.random())?;
    let n = trace.len();
    if window_len > n {
        return Err(Error::TraceTooShort { len: n, window: window_len });
    }
    let sched = echo_schedule(&seq, timing);
    let half = window_len as f64 * model.dt / 2.0;

    let echo = sched[rng.random_range(0..sched.len())];
    // Offset density grows linearly toward ±env_sigma so the edges of the
    // echo class, where the weakest echoes fade into noise, are well sampled.
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let offset = sign * model.env_sigma * rng.random_range(0.0..=1.0f64).sqrt();
    let start_t = echo.center + offset - half;
    let start = ((start_t - trace.t0) / model.dt).round().clamp(0.0, (n - window_len) as f64) as usize;

    let support = model.support_half_width();
    let free: Vec<usize> = (0..=n - window_len)
        .filter(|&s| {
            let (a, b) = (trace.time(s), trace.time(s + window_len - 1));
            sched.iter().all(|e| b < e.center - support || a > e.center + support)
        })
        .collect();
    if free.is_empty() {
        return Err(Error::InsufficientNoiseRegions { needed: 1 });
    }
    let noise_start = free[rng.random_range(0..free.len())];

    let cut = |s: usize, label: u8| {
        let w = &trace.samples[s..s + window_len];
        LabeledWindow {
            window: min_max_normalize(w),
            label,
            raw_range: dynamic_range(w),
        }
    };
    Ok((cut(start, ECHO), cut(noise_start, NOISE)))
}

pub fn classifier_training_set(windows: &[LabeledWindow]) -> Dataset {
    Dataset {
        inputs: windows.iter().map(|w| w.window.clone()).collect(),
        targets: windows.iter().map(|w| one_hot(w.label == ECHO)).collect(),
    }
}

/// One windowed Hahn trace per sweep value of the π/2 phase (π phase zero).
pub fn gen_phase_dataset(
    sweep: &[f64],
    timing: &HahnTiming,
    model: &SignalModel,
    rng_seed: u64,
) -> Result<Vec<PhaseItem>> {
    if let Some(bad) = sweep.iter().find(|v| !(0.0..360.0).contains(*v)) {
        return Err(invalid("sweep", format!("{bad} outside [0, 360)")));
    }
    par::map_range(Exec::default(), sweep.len(), |k| {
        let seed = rng::derive(rng_seed, &format!("phase-{k}"));
        let trace = synth_hahn(sweep[k], 0.0, timing, model, seed)?;
        Ok(PhaseItem {
            window: extract_echo_window(&trace, model.carrier_mhz, model.noise_sigma)?,
            target: sweep[k],
        })
    })
    .into_iter()
    .collect()
}
