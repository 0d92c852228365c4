//! Curve-to-curve error metrics: directed Chamfer distances and their
//! summaries, plus rank correlation for order recovery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::WorldPoint;
use crate::ecdp::Curve3D;
use crate::scalar::{real, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot evaluate an empty curve")]
    EmptyCurve,
}

/// Chamfer summary of a reconstruction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    /// Mean distance from reconstructed points to the nearest ground-truth point.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to the nearest reconstructed point.
    pub completeness: f64,
    /// Mean of accuracy and completeness.
    pub overall: f64,
    /// Largest nearest-neighbour distance in either direction.
    pub max_error: f64,
    pub n_recon: usize,
    pub n_gt: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    accuracy: f64,
    completeness: f64,
    overall: f64,
    max_error: f64,
    n_recon: usize,
    n_gt: usize,
    units: &'a str,
}

impl ReconMetrics {
    /// JSON report `{accuracy, completeness, overall, max_error, n_recon, n_gt, units}`.
    pub fn to_json(&self, units: &str) -> String {
        serde_json::to_string_pretty(&Report {
            accuracy: self.accuracy,
            completeness: self.completeness,
            overall: self.overall,
            max_error: self.max_error,
            n_recon: self.n_recon,
            n_gt: self.n_gt,
            units,
        })
        .expect("plain struct serializes")
    }

    /// Same metrics expressed in another unit (e.g. mm to pixels).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            accuracy: self.accuracy * factor,
            completeness: self.completeness * factor,
            overall: self.overall * factor,
            max_error: self.max_error * factor,
            ..*self
        }
    }
}

/// Resamples a polyline to `n` points equally spaced in arc length.
pub fn resample_curve<T: Real>(points: &[WorldPoint<T>], n: usize) -> Vec<WorldPoint<T>> {
    if points.len() < 2 || n < 2 {
        return points.iter().take(n.max(1)).copied().collect();
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(T::zero());
    for w in points.windows(2) {
        let last = *cum.last().expect("non-empty");
        cum.push(last + w[0].dist(&w[1]));
    }
    let total = *cum.last().expect("non-empty");
    if total <= T::zero() {
        return vec![points[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let target = total * real::<T>(k as f64 / (n - 1) as f64);
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > T::zero() {
            ((target - cum[seg]) / span).clamp(T::zero(), T::one())
        } else {
            T::zero()
        };
        let (a, b) = (points[seg].to_vector(), points[seg + 1].to_vector());
        out.push(WorldPoint::from_vector(&(a + (b - a) * t)));
    }
    out
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Nearest-neighbour index over a point set sorted by x. Queries return the
/// same squared distance as an exhaustive scan: candidates are skipped only
/// when their x offset alone already exceeds the best distance found.
struct SweepIndex {
    pts: Vec<[f64; 3]>,
}

impl SweepIndex {
    fn new(points: &[[f64; 3]]) -> Self {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Self { pts }
    }

    fn nearest2(&self, q: &[f64; 3]) -> f64 {
        let start = self.pts.partition_point(|p| p[0] < q[0]);
        let mut best = f64::INFINITY;
        let mut hi = start;
        let mut lo = start;
        loop {
            let mut progressed = false;
            if hi < self.pts.len() {
                let dx = self.pts[hi][0] - q[0];
                if dx * dx <= best {
                    best = best.min(dist2(&self.pts[hi], q));
                    hi += 1;
                    progressed = true;
                } else {
                    hi = self.pts.len();
                }
            }
            if lo > 0 {
                let dx = q[0] - self.pts[lo - 1][0];
                if dx * dx <= best {
                    best = best.min(dist2(&self.pts[lo - 1], q));
                    lo -= 1;
                    progressed = true;
                } else {
                    lo = 0;
                }
            }
            if !progressed {
                return best;
            }
        }
    }
}

fn as_arrays<T: Real>(pts: &[WorldPoint<T>]) -> Vec<[f64; 3]> {
    pts.iter()
        .map(|p| [to_f64(p.x), to_f64(p.y), to_f64(p.z)])
        .collect()
}

/// Distance from every query point to its nearest neighbour in `set`.
pub fn nearest_distances(queries: &[[f64; 3]], set: &[[f64; 3]]) -> Vec<f64> {
    let index = SweepIndex::new(set);
    queries
        .par_iter()
        .map(|q| index.nearest2(q).sqrt())
        .collect()
}

/// Chamfer metrics between two point sets taken as given (no resampling).
/// Means are summed in point order.
pub fn chamfer<T: Real>(
    recon: &[WorldPoint<T>],
    gt: &[WorldPoint<T>],
) -> Result<ReconMetrics, MetricsError> {
    if recon.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    let (r, g) = (as_arrays(recon), as_arrays(gt));
    let to_gt = nearest_distances(&r, &g);
    let to_recon = nearest_distances(&g, &r);
    Ok(summarize(&to_gt, &to_recon))
}

/// Combines the two directed distance lists into the four metrics.
pub fn summarize(recon_to_gt: &[f64], gt_to_recon: &[f64]) -> ReconMetrics {
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let max = |d: &[f64]| d.iter().copied().fold(0.0, f64::max);
    let accuracy = mean(recon_to_gt);
    let completeness = mean(gt_to_recon);
    ReconMetrics {
        accuracy,
        completeness,
        overall: (accuracy + completeness) / 2.0,
        max_error: max(recon_to_gt).max(max(gt_to_recon)),
        n_recon: recon_to_gt.len(),
        n_gt: gt_to_recon.len(),
    }
}

/// Default ground-truth density: this many samples per reconstructed point.
pub const DEFAULT_RESAMPLE_FACTOR: usize = 10;

/// Evaluates `recon` against `gt` resampled by arc length to `gt_resample`
/// points (default ten times the reconstruction size).
pub fn evaluate<T: Real>(
    recon: &Curve3D<T>,
    gt: &Curve3D<T>,
    gt_resample: Option<usize>,
) -> Result<ReconMetrics, MetricsError> {
    if recon.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    let n = gt_resample.unwrap_or(DEFAULT_RESAMPLE_FACTOR * recon.len()).max(2);
    let dense = resample_curve(&gt.points, n);
    chamfer(&recon.points, &dense)
}

/// Kendall rank correlation (tau-b, tie-corrected) between two equally long
/// sequences. Returns 0 when either sequence is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "sequences must have equal length");
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[j] - a[i];
            let db = b[j] - b[i];
            if da == 0.0 && db == 0.0 {
                continue;
            }
            if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n1 = (concordant + discordant + ties_a) as f64;
    let n2 = (concordant + discordant + ties_b) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / (n1 * n2).sqrt()
}
