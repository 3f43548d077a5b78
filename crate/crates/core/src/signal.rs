//! Envelope estimation and window normalization shared by every stage.

/// Centered moving RMS with a window of `len` samples, truncated at the edges.
pub fn moving_rms(samples: &[f64], len: usize) -> Vec<f64> {
    let n = samples.len();
    if n == 0 || len == 0 {
        return vec![0.0; n];
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &s in samples {
        acc += s * s;
        prefix.push(acc);
    }
    let before = (len - 1) / 2;
    let after = len - 1 - before;
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(before);
            let hi = (k + after + 1).min(n);
            ((prefix[hi] - prefix[lo]).max(0.0) / (hi - lo) as f64).sqrt()
        })
        .collect()
}

/// Rectified amplitude envelope: `√2 · moving RMS`, so a pure sinusoid of
/// amplitude `A` maps to `A`.
pub fn rms_envelope(samples: &[f64], len: usize) -> Vec<f64> {
    moving_rms(samples, len)
        .into_iter()
        .map(|r| r * std::f64::consts::SQRT_2)
        .collect()
}

/// Smallest sample count spanning a whole number of carrier periods, searched
/// up to `max_periods` periods. Falls back to the closest candidate.
pub fn whole_period_len(samples_per_period: f64, max_periods: usize) -> usize {
    let mut best = (f64::INFINITY, samples_per_period.round().max(1.0) as usize);
    for p in 1..=max_periods.max(1) {
        let exact = p as f64 * samples_per_period;
        let n = exact.round();
        let err = (n - exact).abs();
        if err < 1e-6 {
            return n as usize;
        }
        if err < best.0 {
            best = (err, n as usize);
        }
    }
    best.1.max(1)
}

/// Min-max normalization to [0, 1]. A window with no dynamic range maps to zeros.
pub fn min_max_normalize(window: &[f64]) -> Vec<f64> {
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; window.len()];
    }
    window.iter().map(|&v| (v - lo) / range).collect()
}

pub fn dynamic_range(window: &[f64]) -> f64 {
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if window.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
