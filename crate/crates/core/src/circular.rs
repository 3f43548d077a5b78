//! Angle arithmetic in degrees.

pub fn wrap360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` wrapped to [-180, 180).
pub fn signed_diff(a: f64, b: f64) -> f64 {
    wrap360(a - b + 180.0) - 180.0
}

/// Angular error `min(d, 360 - d)`, always in [0, 180].
pub fn angular_error(a: f64, b: f64) -> f64 {
    let d = wrap360(a - b);
    d.min(360.0 - d)
}

/// Circular mean in [0, 360); `None` when the resultant vanishes.
pub fn circular_mean(angles: &[f64]) -> Option<f64> {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    if s.hypot(c) < 1e-12 * angles.len().max(1) as f64 {
        None
    } else {
        Some(wrap360(s.atan2(c).to_degrees()))
    }
}

/// Greedy unwrapping: each step is replaced by its representative in [-180, 180].
pub fn unwrap(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    for &a in angles {
        match out.last() {
            None => out.push(a),
            Some(&prev) => {
                let mut step = a - prev;
                step -= 360.0 * (step / 360.0).round();
                out.push(prev + step);
            }
        }
    }
    out
}

/// Least-squares line `y = slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Circular-linear fit: unwrap `y` in sweep order, then fit a line.
pub fn circular_linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    linear_fit(x, &unwrap(y))
}
