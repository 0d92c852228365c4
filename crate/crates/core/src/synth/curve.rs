use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::camera::WorldPoint;
use crate::ecdp::Curve3D;

/// Parameters of a random smooth space curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveSpec {
    pub seed: u64,
    pub n_control: usize,
    /// Total arc length, mm.
    pub length_mm: f64,
    /// Amplitude of the control-point perturbation, mm.
    pub bend_scale: f64,
    /// Probability in [0, 1] of a loop that crosses itself in projection.
    pub loop_bias: f64,
    /// Number of uniformly spaced output samples.
    pub n_samples: usize,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_control: 12,
            length_mm: 160.0,
            bend_scale: 12.0,
            loop_bias: 0.0,
            n_samples: 2000,
        }
    }
}

impl CurveSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.n_control < 4 {
            return bad("n_control must be at least 4");
        }
        if self.n_samples < 100 {
            return bad("n_samples must be at least 100");
        }
        if !(self.length_mm > 0.0 && self.length_mm.is_finite()) {
            return bad("length_mm must be positive");
        }
        if !(self.bend_scale >= 0.0 && self.bend_scale.is_finite()) {
            return bad("bend_scale must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.loop_bias) {
            return bad("loop_bias must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Centripetal Catmull-Rom spline through `ctrl`, `per_segment` samples per
/// span, end spans closed with reflected phantom points.
pub fn catmull_rom(ctrl: &[Vector3<f64>], per_segment: usize) -> Vec<Vector3<f64>> {
    let n = ctrl.len();
    if n < 2 {
        return ctrl.to_vec();
    }
    let get = |i: isize| -> Vector3<f64> {
        if i < 0 {
            ctrl[0] * 2.0 - ctrl[1]
        } else if i as usize >= n {
            ctrl[n - 1] * 2.0 - ctrl[n - 2]
        } else {
            ctrl[i as usize]
        }
    };
    let knot = |a: &Vector3<f64>, b: &Vector3<f64>| (a - b).norm().sqrt().max(1e-9);
    let mut out = Vec::with_capacity((n - 1) * per_segment + 1);
    for seg in 0..n - 1 {
        let i = seg as isize;
        let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
        let t0 = 0.0;
        let t1 = t0 + knot(&p1, &p0);
        let t2 = t1 + knot(&p2, &p1);
        let t3 = t2 + knot(&p3, &p2);
        for k in 0..per_segment {
            let t = t1 + (t2 - t1) * k as f64 / per_segment as f64;
            let a1 = p0 * ((t1 - t) / (t1 - t0)) + p1 * ((t - t0) / (t1 - t0));
            let a2 = p1 * ((t2 - t) / (t2 - t1)) + p2 * ((t - t1) / (t2 - t1));
            let a3 = p2 * ((t3 - t) / (t3 - t2)) + p3 * ((t - t2) / (t3 - t2));
            let b1 = a1 * ((t2 - t) / (t2 - t0)) + a2 * ((t - t0) / (t2 - t0));
            let b2 = a2 * ((t3 - t) / (t3 - t1)) + a3 * ((t - t1) / (t3 - t1));
            out.push(b1 * ((t2 - t) / (t2 - t1)) + b2 * ((t - t1) / (t2 - t1)));
        }
    }
    out.push(ctrl[n - 1]);
    out
}

/// Resamples a polyline to `n` points equally spaced in arc length
/// (endpoints kept).
pub fn resample_uniform(pts: &[Vector3<f64>], n: usize) -> Vec<Vector3<f64>> {
    if pts.len() < 2 || n < 2 {
        return pts.iter().take(n.max(1)).copied().collect();
    }
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let last = *cum.last().expect("non-empty");
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total = *cum.last().expect("non-empty");
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    out
}

fn polyline_length(pts: &[Vector3<f64>]) -> f64 {
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Random smooth curve through perturbed control points, resampled to
/// uniform arc length, scaled to `length_mm` and centred at the origin.
///
/// The control polygon runs roughly along the world y axis. With
/// probability `loop_bias` a trochoidal loop is added in a plane seen
/// edge-on by neither preset camera, so its projection crosses itself; the
/// remaining curves get a gentle two-axis wave. Every control point also
/// receives Gaussian noise proportional to `bend_scale`.
pub fn gen_curve(spec: &CurveSpec) -> Result<(Curve3D<f64>, Vec<f64>), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_control;

    let tilt = rng.random_range(0.0..35f64).to_radians();
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let dir = Vector3::new(tilt.sin() * azimuth.cos(), tilt.cos(), tilt.sin() * azimuth.sin());
    let diag = Vector3::new(1.0, 0.0, -1.0) / 2f64.sqrt();
    let e1 = (diag - dir * diag.dot(&dir)).normalize();
    let e2 = dir.cross(&e1);
    let roll = rng.random_range(-20.0..20f64).to_radians();
    let across = e1 * roll.cos() + e2 * roll.sin();
    let other = dir.cross(&across);

    let spacing = 1.0 / (n - 1) as f64;
    let has_loop = spec.bend_scale > 0.0 && rng.random::<f64>() < spec.loop_bias;
    // loop spans six control intervals, starting in the middle third
    let loop_span = 6.min(n - 1);
    let loop_start = if n - 1 > loop_span {
        rng.random_range(((n - 1 - loop_span) / 3)..=((2 * (n - 1 - loop_span)).div_ceil(3)))
    } else {
        0
    };
    let ratio = rng.random_range(2.0..3.0);
    let advance_per_rad = loop_span as f64 * spacing / std::f64::consts::TAU;
    let radius = ratio * advance_per_rad;
    let freq = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
    let phase = [
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    ];
    // the control polygon has unit length; offsets are scaled to match
    let amp = spec.bend_scale / spec.length_mm;

    let mut ctrl = Vec::with_capacity(n);
    for k in 0..n {
        let s = k as f64 * spacing;
        let mut p = dir * (s - 0.5);
        if has_loop {
            // one trochoid period centred on its loop: the offset vanishes
            // at both ends and the path crosses itself when radius exceeds
            // the advance per radian
            let u = (k as f64 - loop_start as f64) / loop_span as f64;
            let phi = std::f64::consts::PI * (2.0 * u.clamp(0.0, 1.0) - 1.0);
            p += dir * (-radius * phi.sin()) + across * (radius * (1.0 + phi.cos()));
        } else if amp > 0.0 {
            let w = std::f64::consts::TAU;
            p += across * (amp * (w * freq[0] * s + phase[0]).sin());
            p += other * (amp * 0.6 * (w * freq[1] * s + phase[1]).sin());
        }
        if amp > 0.0 {
            let noise = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            p += noise * (0.25 * amp);
        }
        ctrl.push(p);
    }

    let dense = catmull_rom(&ctrl, 64);
    let mut pts = resample_uniform(&dense, spec.n_samples);
    let scale = spec.length_mm / polyline_length(&pts);
    let centroid = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / pts.len() as f64;
    for p in &mut pts {
        *p = (*p - centroid) * scale;
    }
    let step = spec.length_mm / (spec.n_samples - 1) as f64;
    let arc = (0..pts.len()).map(|k| k as f64 * step).collect();
    let points = pts.iter().map(WorldPoint::from_vector).collect();
    Ok((Curve3D::from_points(points), arc))
}
