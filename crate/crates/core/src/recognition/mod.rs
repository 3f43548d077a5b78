//! Echo-train recognition: sliding-window echo probabilities, K-means
//! post-selection over the four retrieval windows, bit inference and the
//! per-bit fidelity `F = (1 - |A - p_rev|) · 100`.

mod kmeans;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans_1d, kmeans_1d_with, ClusterResult, KMeansConfig};

use crate::error::{invalid, Error, Result};
use crate::neural::{DenseNetwork, Head};
use crate::par::{self, Exec};
use crate::rng;
use crate::signal::{dynamic_range, min_max_normalize};
use crate::sim::{BitSequence, RawTrace, SequenceTiming, N_SLOTS};

/// Echo probability per sliding-window position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTrace {
    /// Window start times, ns.
    pub times: Vec<f64>,
    pub p_e: Vec<f64>,
    pub window_len: usize,
    pub stride: usize,
    pub dt: f64,
}

impl ProbabilityTrace {
    pub fn center_time(&self, k: usize) -> f64 {
        self.times[k] + self.window_len as f64 * self.dt / 2.0
    }

    pub fn len(&self) -> usize {
        self.p_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_e.is_empty()
    }

    /// Echo probabilities whose window centers fall in `[start, end)`.
    pub fn in_window(&self, start: f64, end: f64) -> Vec<f64> {
        (0..self.len())
            .filter(|&k| {
                let c = self.center_time(k);
                c >= start && c < end
            })
            .map(|k| self.p_e[k])
            .collect()
    }
}

/// Sliding-window length, samples: one echo support at the default model.
pub const WINDOW_LEN: usize = 240;
/// Sliding-window step, samples.
pub const STRIDE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionConfig {
    pub window_len: usize,
    pub stride: usize,
    pub kmeans: KMeansConfig,
    pub seed: u64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            stride: STRIDE,
            kmeans: KMeansConfig::default(),
            seed: 0,
        }
    }
}

/// Echo probability of one raw window. A window without dynamic range
/// carries no signal and scores zero.
pub fn window_probability(net: &DenseNetwork, window: &[f64]) -> Result<f64> {
    if dynamic_range(window) <= 0.0 {
        return Ok(0.0);
    }
    Ok(net.forward(&min_max_normalize(window))?[0])
}

pub fn slide_classify(net: &DenseNetwork, trace: &RawTrace, window_len: usize, stride: usize) -> Result<ProbabilityTrace> {
    slide_classify_with(Exec::default(), net, trace, window_len, stride)
}

pub fn slide_classify_with(
    exec: Exec,
    net: &DenseNetwork,
    trace: &RawTrace,
    window_len: usize,
    stride: usize,
) -> Result<ProbabilityTrace> {
    if net.head != Head::Classifier {
        return Err(Error::WrongHead {
            expected: "classifier",
            found: net.head.name(),
        });
    }
    if net.input_dim() != window_len {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: window_len,
        });
    }
    if stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    if window_len == 0 || trace.len() < window_len {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            window: window_len,
        });
    }
    let starts: Vec<usize> = (0..=trace.len() - window_len).step_by(stride).collect();
    let p_e = par::map(exec, &starts, |&s| window_probability(net, &trace.samples[s..s + window_len]))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbabilityTrace {
        times: starts.iter().map(|&s| trace.time(s)).collect(),
        p_e,
        window_len,
        stride,
        dt: trace.dt,
    })
}

/// The four equal retrieval windows, in time order, each centered on one
/// possible echo and one echo spacing wide.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalWindows {
    pub bounds: [(f64, f64); N_SLOTS],
}

impl RetrievalWindows {
    pub fn from_timing(timing: &SequenceTiming) -> Self {
        let half = timing.spacing() / 2.0;
        let mut bounds = [(0.0, 0.0); N_SLOTS];
        for (w, b) in bounds.iter_mut().enumerate() {
            // Time-order window w (0-based) holds the echo of pulse i = 4 - w.
            let c = timing.echo_center(N_SLOTS - w);
            *b = (c - half, c + half);
        }
        Self { bounds }
    }

    /// Window (0-based, time order) containing `t`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        self.bounds.iter().position(|&(a, b)| t >= a && t < b)
    }
}

/// Value of the majority cluster of a k=2 clustering; ties go to the lower centroid.
pub fn majority_centroid(points: &[f64], seed: u64, cfg: &KMeansConfig) -> Result<f64> {
    let r = kmeans_1d_with(points, 2, seed, cfg)?;
    let sizes = r.sizes();
    let pick = match sizes[0].cmp(&sizes[1]) {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => {
            if r.centroids[0] <= r.centroids[1] {
                0
            } else {
                1
            }
        }
    };
    Ok(r.centroids[pick])
}

/// K-means post-selection: one probability per retrieval window, in time order.
pub fn post_select(
    ptrace: &ProbabilityTrace,
    windows: &RetrievalWindows,
    cfg: &KMeansConfig,
    seed: u64,
) -> Result<[f64; N_SLOTS]> {
    let mut out = [0.0; N_SLOTS];
    for (w, &(a, b)) in windows.bounds.iter().enumerate() {
        let pts = ptrace.in_window(a, b);
        if pts.len() < 2 {
            return Err(Error::SparseWindow { window: w, points: pts.len() });
        }
        out[w] = majority_centroid(&pts, rng::derive(seed, &format!("post-select-{w}")), cfg)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitEstimate {
    pub bits: BitSequence,
    /// `p_rev[i-1]`: probability assigned to input bit i.
    pub p_rev: [f64; N_SLOTS],
}

/// Undoes the time reversal: time-order window w (1-based) is input bit 5 − w.
pub fn infer_bits(time_probs: &[f64; N_SLOTS]) -> BitEstimate {
    let mut p_rev = *time_probs;
    p_rev.reverse();
    let mut bits = [0u8; N_SLOTS];
    for (b, p) in bits.iter_mut().zip(&p_rev) {
        *b = u8::from(*p > 0.5);
    }
    BitEstimate {
        bits: BitSequence { bits },
        p_rev,
    }
}

/// Per-bit fidelity in percent.
pub fn fidelity(nominal: u8, p_rev: f64) -> Result<f64> {
    if nominal > 1 {
        return Err(invalid("nominal", format!("bit value {nominal} is not 0 or 1")));
    }
    if !(0.0..=1.0).contains(&p_rev) {
        return Err(invalid("p_rev", format!("{p_rev} outside [0, 1]")));
    }
    Ok((1.0 - (f64::from(nominal) - p_rev).abs()) * 100.0)
}

/// Minimum fidelity counted as a successful bit.
pub const SUCCESS_THRESHOLD: f64 = 70.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub method: String,
    /// `f[i-1][j]`: fidelity of bit i in sequence j, percent.
    pub f: [[f64; 16]; N_SLOTS],
    pub f_avg: [f64; N_SLOTS],
    /// Population standard deviation over j.
    pub f_std: [f64; N_SLOTS],
}

impl FidelityReport {
    /// Builds the report from the time-order window probabilities of each sequence.
    pub fn from_time_probs(method: &str, time_probs: &[[f64; N_SLOTS]; 16]) -> Result<Self> {
        let mut f = [[0.0; 16]; N_SLOTS];
        for (j, probs) in time_probs.iter().enumerate() {
            let seq = BitSequence::from_decimal(j as u8)?;
            let est = infer_bits(probs);
            for i in 1..=N_SLOTS {
                f[i - 1][j] = fidelity(seq.bit(i), est.p_rev[i - 1])?;
            }
        }
        let mut f_avg = [0.0; N_SLOTS];
        let mut f_std = [0.0; N_SLOTS];
        for i in 0..N_SLOTS {
            let mean = f[i].iter().sum::<f64>() / 16.0;
            f_avg[i] = mean;
            f_std[i] = (f[i].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
        }
        Ok(Self {
            method: method.to_string(),
            f,
            f_avg,
            f_std,
        })
    }

    /// Percentage of the 64 bit values with fidelity ≥ 70%.
    pub fn success_percent(&self) -> f64 {
        let hits = self.f.iter().flatten().filter(|&&v| v >= SUCCESS_THRESHOLD).count();
        100.0 * hits as f64 / 64.0
    }

    /// Bits whose fidelity falls to 50% or below, i.e. wrongly decided.
    pub fn wrong_bits(&self) -> usize {
        self.f.iter().flatten().filter(|&&v| v <= 50.0).count()
    }

    pub fn min_fidelity(&self) -> f64 {
        self.f.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Long-format CSV `i,j,F_percent`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "F_percent"])?;
        for (i, row) in self.f.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([(i + 1).to_string(), j.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Traces keyed by sequence number j.
pub type TraceSet = BTreeMap<u8, RawTrace>;

pub fn require_all(traces: &TraceSet) -> Result<()> {
    match (0..16u8).find(|j| !traces.contains_key(j)) {
        Some(j) => Err(Error::MissingSequence(j)),
        None => Ok(()),
    }
}

/// Probability traces of all 16 sequences, computed concurrently and
/// returned in order of j.
pub fn probability_traces(net: &DenseNetwork, traces: &TraceSet, cfg: &RecognitionConfig) -> Result<Vec<ProbabilityTrace>> {
    require_all(traces)?;
    let ordered: Vec<&RawTrace> = (0..16u8).map(|j| &traces[&j]).collect();
    par::map(Exec::default(), &ordered, |t| {
        slide_classify_with(Exec::Sequential, net, t, cfg.window_len, cfg.stride)
    })
    .into_iter()
    .collect()
}

/// K-means time-order window probabilities for every sequence.
pub fn kmeans_time_probs(
    ptraces: &[ProbabilityTrace],
    windows: &RetrievalWindows,
    cfg: &RecognitionConfig,
) -> Result<[[f64; N_SLOTS]; 16]> {
    let mut out = [[0.0; N_SLOTS]; 16];
    for (j, pt) in ptraces.iter().enumerate() {
        out[j] = post_select(pt, windows, &cfg.kmeans, rng::derive(cfg.seed, &format!("seq-{j}")))?;
    }
    Ok(out)
}

pub const KMEANS_METHOD: &str = "ANN + K-means";

pub fn full_protocol_report(
    net: &DenseNetwork,
    traces: &TraceSet,
    timing: &SequenceTiming,
    cfg: &RecognitionConfig,
) -> Result<FidelityReport> {
    let ptraces = probability_traces(net, traces, cfg)?;
    let probs = kmeans_time_probs(&ptraces, &RetrievalWindows::from_timing(timing), cfg)?;
    FidelityReport::from_time_probs(KMEANS_METHOD, &probs)
}
