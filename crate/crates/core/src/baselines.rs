//! Non-ML comparison methods and the method scoreboard.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::neural::DenseNetwork;
use crate::par::{self, Exec};
use crate::recognition::{
    kmeans_time_probs, probability_traces, require_all, FidelityReport, ProbabilityTrace, RecognitionConfig,
    RetrievalWindows, TraceSet, KMEANS_METHOD,
};
use crate::signal::rms_envelope;
use crate::sim::{RawTrace, SequenceTiming, N_SLOTS};

/// Moving-RMS length for the rectified envelope of raw traces, samples.
pub const ENVELOPE_LEN: usize = 11;

/// Peak indices in the style of `scipy.signal.find_peaks`.
///
/// Candidates are local maxima; a flat top counts once, at its first index.
/// Candidates are then filtered by height, by prominence (height above the
/// higher of the two flanking minima), and finally by spacing: peaks are
/// kept tallest first and anything closer than `min_distance` to a kept
/// peak is dropped. A `min_distance` of 0 or 1 disables the spacing filter.
pub fn find_peaks(series: &[f64], min_height: f64, min_prominence: f64, min_distance: usize) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = series.len();
    let mut k = 1;
    while k + 1 < n {
        if series[k - 1] < series[k] {
            let mut ahead = k + 1;
            while ahead < n - 1 && series[ahead] == series[k] {
                ahead += 1;
            }
            if series[ahead] < series[k] {
                peaks.push(k);
                k = ahead;
                continue;
            }
        }
        k += 1;
    }
    peaks.retain(|&p| series[p] >= min_height);
    if min_prominence > 0.0 {
        peaks.retain(|&p| prominence(series, p) >= min_prominence);
    }
    if min_distance > 1 {
        let mut order = peaks.clone();
        order.sort_by(|&a, &b| series[b].total_cmp(&series[a]).then(a.cmp(&b)));
        let mut keep = vec![false; n];
        let mut kept: Vec<usize> = Vec::new();
        for p in order {
            if kept.iter().all(|&q| p.abs_diff(q) >= min_distance) {
                kept.push(p);
                keep[p] = true;
            }
        }
        peaks.retain(|&p| keep[p]);
    }
    peaks
}

/// Prominence of the peak at `p`: walk outward until a strictly higher
/// sample (or the edge) and take the lowest point on each side.
pub fn prominence(series: &[f64], p: usize) -> f64 {
    let h = series[p];
    let mut left = h;
    for &v in series[..p].iter().rev() {
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &series[p + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

fn raw_window_values(trace: &RawTrace, values: &[f64], a: f64, b: f64) -> Vec<(usize, f64)> {
    (0..trace.len())
        .filter(|&k| {
            let t = trace.time(k);
            t >= a && t < b
        })
        .map(|k| (k, values[k]))
        .collect()
}

/// Bit per window: 1 when the rectified envelope inside the window exceeds `threshold`.
pub fn threshold_peak_search(trace: &RawTrace, threshold: f64, windows: &RetrievalWindows) -> Result<[f64; N_SLOTS]> {
    if threshold <= 0.0 || threshold.is_nan() {
        return Err(invalid("threshold", "must be positive"));
    }
    let env = rms_envelope(&trace.samples, ENVELOPE_LEN);
    let mut out = [0.0; N_SLOTS];
    for (w, &(a, b)) in windows.bounds.iter().enumerate() {
        let peak = raw_window_values(trace, &env, a, b)
            .into_iter()
            .map(|(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        out[w] = f64::from(u8::from(peak > threshold));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub thresholds: Vec<f64>,
    /// Wrong bits out of 64 at each threshold.
    pub errors: Vec<usize>,
    pub best_threshold: f64,
    pub best_errors: usize,
}

/// Scores every threshold on all 16 traces; the lowest threshold with the
/// fewest errors is reported as best.
pub fn threshold_sweep(traces: &TraceSet, timing: &SequenceTiming, thresholds: &[f64]) -> Result<ThresholdSweep> {
    require_all(traces)?;
    if thresholds.is_empty() {
        return Err(Error::Empty("thresholds"));
    }
    let windows = RetrievalWindows::from_timing(timing);
    let errors = par::map(Exec::default(), thresholds, |&th| -> Result<usize> {
        let probs = per_trace(traces, |t| threshold_peak_search(t, th, &windows))?;
        Ok(FidelityReport::from_time_probs("threshold", &probs)?.wrong_bits())
    })
    .into_iter()
    .collect::<Result<Vec<usize>>>()?;
    let best = (0..errors.len()).min_by_key(|&k| errors[k]).expect("non-empty");
    Ok(ThresholdSweep {
        thresholds: thresholds.to_vec(),
        best_threshold: thresholds[best],
        best_errors: errors[best],
        errors,
    })
}

fn per_trace(traces: &TraceSet, f: impl Fn(&RawTrace) -> Result<[f64; N_SLOTS]>) -> Result<[[f64; N_SLOTS]; 16]> {
    let mut out = [[0.0; N_SLOTS]; 16];
    for j in 0..16u8 {
        out[usize::from(j)] = f(&traces[&j])?;
    }
    Ok(out)
}

fn ptrace_windows(ptrace: &ProbabilityTrace, windows: &RetrievalWindows, reduce: impl Fn(&[f64]) -> f64) -> Result<[f64; N_SLOTS]> {
    let mut out = [0.0; N_SLOTS];
    for (w, &(a, b)) in windows.bounds.iter().enumerate() {
        let pts = ptrace.in_window(a, b);
        if pts.is_empty() {
            return Err(Error::SparseWindow { window: w, points: 0 });
        }
        out[w] = reduce(&pts);
    }
    Ok(out)
}

/// Mean echo probability per window.
pub fn window_average(ptrace: &ProbabilityTrace, windows: &RetrievalWindows) -> Result<[f64; N_SLOTS]> {
    ptrace_windows(ptrace, windows, |p| p.iter().sum::<f64>() / p.len() as f64)
}

/// Largest echo probability per window.
pub fn window_max(ptrace: &ProbabilityTrace, windows: &RetrievalWindows) -> Result<[f64; N_SLOTS]> {
    ptrace_windows(ptrace, windows, |p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub min_height: f64,
    pub min_prominence: f64,
    /// Minimum spacing in nanoseconds; converted to indices per series.
    pub min_distance_ns: f64,
}

impl PeakParams {
    /// Peaks on a probability trace: above 0.5, standing clear of the
    /// background, at most one per half echo spacing.
    pub fn for_probabilities(timing: &SequenceTiming) -> Self {
        Self {
            min_height: 0.5,
            min_prominence: 0.2,
            min_distance_ns: timing.spacing() / 2.0,
        }
    }

    /// Peaks on the rectified raw envelope: above three noise sigmas.
    pub fn for_raw(timing: &SequenceTiming, noise_sigma: f64) -> Self {
        Self {
            min_height: 3.0 * noise_sigma,
            min_prominence: 0.0,
            min_distance_ns: timing.spacing() / 2.0,
        }
    }

    fn distance(&self, step_ns: f64) -> usize {
        (self.min_distance_ns / step_ns).round() as usize
    }
}

/// Height of the tallest detected peak whose window center lies in each
/// retrieval window; zero when none does.
pub fn ptrace_find_peaks(ptrace: &ProbabilityTrace, windows: &RetrievalWindows, params: &PeakParams) -> [f64; N_SLOTS] {
    let step = ptrace.stride as f64 * ptrace.dt;
    let peaks = find_peaks(&ptrace.p_e, params.min_height, params.min_prominence, params.distance(step));
    let mut out = [0.0f64; N_SLOTS];
    for p in peaks {
        if let Some(w) = windows.locate(ptrace.center_time(p)) {
            out[w] = out[w].max(ptrace.p_e[p]);
        }
    }
    out
}

/// Bit per window: 1 when the rectified raw envelope has a detected peak in it.
pub fn raw_find_peaks(trace: &RawTrace, windows: &RetrievalWindows, params: &PeakParams) -> [f64; N_SLOTS] {
    let env = rms_envelope(&trace.samples, ENVELOPE_LEN);
    let peaks = find_peaks(&env, params.min_height, params.min_prominence, params.distance(trace.dt));
    let mut out = [0.0; N_SLOTS];
    for p in peaks {
        if let Some(w) = windows.locate(trace.time(p)) {
            out[w] = 1.0;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    AnnKMeans,
    AnnAverage,
    AnnMaxSearch,
    AnnFindPeaks,
    RawFindPeaks,
}

impl Method {
    /// Scoreboard order.
    pub const ALL: [Method; 5] = [
        Method::AnnKMeans,
        Method::AnnAverage,
        Method::AnnMaxSearch,
        Method::AnnFindPeaks,
        Method::RawFindPeaks,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::AnnKMeans => KMEANS_METHOD,
            Method::AnnAverage => "ANN + Average",
            Method::AnnMaxSearch => "ANN + Max Search",
            Method::AnnFindPeaks => "ANN + Find Peaks",
            Method::RawFindPeaks => "Find Peaks",
        }
    }

    pub fn is_ml(self) -> bool {
        self != Method::RawFindPeaks
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub success_percent: f64,
    pub f_avg: [f64; N_SLOTS],
    pub f_std: [f64; N_SLOTS],
}

impl From<&FidelityReport> for MethodScore {
    fn from(r: &FidelityReport) -> Self {
        Self {
            method: r.method.clone(),
            success_percent: r.success_percent(),
            f_avg: r.f_avg,
            f_std: r.f_std,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub recognition: RecognitionConfig,
    pub ptrace_peaks: PeakParams,
    pub raw_peaks: PeakParams,
}

impl BaselineConfig {
    pub fn new(timing: &SequenceTiming, noise_sigma: f64, recognition: RecognitionConfig) -> Self {
        Self {
            recognition,
            ptrace_peaks: PeakParams::for_probabilities(timing),
            raw_peaks: PeakParams::for_raw(timing, noise_sigma),
        }
    }
}

/// Full fidelity reports for `methods`, every one evaluated on the same
/// traces and probability traces.
pub fn evaluate_methods(
    methods: &[Method],
    net: &DenseNetwork,
    traces: &TraceSet,
    timing: &SequenceTiming,
    cfg: &BaselineConfig,
) -> Result<Vec<FidelityReport>> {
    if methods.is_empty() {
        return Err(Error::Empty("methods"));
    }
    let windows = RetrievalWindows::from_timing(timing);
    let ptraces = probability_traces(net, traces, &cfg.recognition)?;
    par::map(Exec::default(), methods, |&m| {
        let probs = match m {
            Method::AnnKMeans => kmeans_time_probs(&ptraces, &windows, &cfg.recognition)?,
            Method::AnnAverage => per_ptrace(&ptraces, |p| window_average(p, &windows))?,
            Method::AnnMaxSearch => per_ptrace(&ptraces, |p| window_max(p, &windows))?,
            Method::AnnFindPeaks => per_ptrace(&ptraces, |p| Ok(ptrace_find_peaks(p, &windows, &cfg.ptrace_peaks)))?,
            Method::RawFindPeaks => per_trace(traces, |t| Ok(raw_find_peaks(t, &windows, &cfg.raw_peaks)))?,
        };
        FidelityReport::from_time_probs(m.label(), &probs)
    })
    .into_iter()
    .collect()
}

fn per_ptrace(
    ptraces: &[ProbabilityTrace],
    f: impl Fn(&ProbabilityTrace) -> Result<[f64; N_SLOTS]>,
) -> Result<[[f64; N_SLOTS]; 16]> {
    let mut out = [[0.0; N_SLOTS]; 16];
    for (j, p) in ptraces.iter().enumerate() {
        out[j] = f(p)?;
    }
    Ok(out)
}

/// All five methods on the same traces, ANN + K-means first.
pub fn scoreboard(net: &DenseNetwork, traces: &TraceSet, timing: &SequenceTiming, cfg: &BaselineConfig) -> Result<Vec<MethodScore>> {
    Ok(evaluate_methods(&Method::ALL, net, traces, timing, cfg)?
        .iter()
        .map(MethodScore::from)
        .collect())
}

pub fn scoreboard_text(scores: &[MethodScore]) -> String {
    let width = scores.iter().map(|s| s.method.len()).max().unwrap_or(0).max("method".len());
    let mut out = format!("{:<width$}  {:>9}", "method", "success%");
    for i in 1..=N_SLOTS {
        out.push_str(&format!("  {:>13}", format!("F{i}")));
    }
    out.push('\n');
    for s in scores {
        out.push_str(&format!("{:<width$}  {:>9.1}", s.method, s.success_percent));
        for i in 0..N_SLOTS {
            out.push_str(&format!("  {:>13}", format!("{:.1} ± {:.1}", s.f_avg[i], s.f_std[i])));
        }
        out.push('\n');
    }
    out
}

pub fn write_scoreboard_csv(scores: &[MethodScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string(), "success_percent".to_string()];
    for i in 1..=N_SLOTS {
        header.push(format!("f{i}_avg"));
        header.push(format!("f{i}_std"));
    }
    w.write_record(&header)?;
    for s in scores {
        let mut row = vec![s.method.clone(), s.success_percent.to_string()];
        for i in 0..N_SLOTS {
            row.push(s.f_avg[i].to_string());
            row.push(s.f_std[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
