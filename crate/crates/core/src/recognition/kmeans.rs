//! Lloyd's algorithm on scalars. Starts are the exact optimal partition of
//! the sorted points (dynamic programming) plus seeded k-means++ restarts;
//! the lowest-inertia fixpoint wins.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            restarts: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Fewer distinct points than clusters.
    pub degenerate: bool,
}

impl ClusterResult {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn kmeans_1d(points: &[f64], k: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_1d_with(points, k, seed, &KMeansConfig::default())
}

pub fn kmeans_1d_with(points: &[f64], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<ClusterResult> {
    if points.is_empty() {
        return Err(Error::Empty("points"));
    }
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(invalid("points", "must be finite"));
    }
    let mut distinct = points.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let degenerate = distinct.len() < k;

    let mut rng = rng::stream(seed, "kmeans");
    let mut best: Option<ClusterResult> = None;
    let mut starts = vec![optimal_partition(points, k)];
    for _ in 0..cfg.restarts {
        starts.push(plus_plus_init(points, k, &mut rng));
    }
    for init in starts {
        let (assignments, centroids) = lloyd(points, init, cfg.max_iter);
        let inertia = inertia(points, &assignments, &centroids);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(ClusterResult {
                assignments,
                centroids,
                inertia,
                degenerate,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Centroids of the least-squares partition of the sorted points into at
/// most `k` contiguous groups. In one dimension the optimal clustering is
/// always contiguous, so this is the global optimum.
fn optimal_partition(points: &[f64], k: usize) -> Vec<f64> {
    let mut xs = points.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let groups = k.min(n);
    let mut sum = vec![0.0; n + 1];
    let mut sq = vec![0.0; n + 1];
    for (i, &x) in xs.iter().enumerate() {
        sum[i + 1] = sum[i] + x;
        sq[i + 1] = sq[i] + x * x;
    }
    // Within-group SSE of xs[a..b], clamped against rounding below zero.
    let cost = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = sum[b] - sum[a];
        (sq[b] - sq[a] - s * s / m).max(0.0)
    };
    // best[g][i]: minimal cost of xs[..i] in g groups; cut[g][i]: start of the last group.
    let mut best = vec![vec![f64::INFINITY; n + 1]; groups + 1];
    let mut cut = vec![vec![0usize; n + 1]; groups + 1];
    best[0][0] = 0.0;
    for g in 1..=groups {
        for i in g..=n {
            for a in g - 1..i {
                let c = best[g - 1][a] + cost(a, i);
                if c < best[g][i] {
                    best[g][i] = c;
                    cut[g][i] = a;
                }
            }
        }
    }
    let mut centroids = Vec::with_capacity(k);
    let mut end = n;
    for g in (1..=groups).rev() {
        let a = cut[g][end];
        centroids.push((sum[end] - sum[a]) / (end - a) as f64);
        end = a;
    }
    centroids.reverse();
    while centroids.len() < k {
        centroids.push(*centroids.last().expect("at least one group"));
    }
    centroids
}

fn plus_plus_init(points: &[f64], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| (p - c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            d2.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick]);
    }
    centroids
}

fn nearest(p: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in centroids.iter().enumerate() {
        if (p - v).abs() < (p - centroids[best]).abs() {
            best = c;
        }
    }
    best
}

/// Alternates assignment and mean updates until the assignment is a
/// fixpoint or `max_iter` rounds have run. Empty clusters keep their centroid.
fn lloyd(points: &[f64], mut centroids: Vec<f64>, max_iter: usize) -> (Vec<usize>, Vec<f64>) {
    let mut assignments: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
    for _ in 0..max_iter {
        let k = centroids.len();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&p, &a) in points.iter().zip(&assignments) {
            sums[a] += p;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    (assignments, centroids)
}

fn inertia(points: &[f64], assignments: &[usize], centroids: &[f64]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| (p - centroids[a]).powi(2))
        .sum()
}
