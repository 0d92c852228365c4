//! Curve topology traversal: turns an unordered skeleton into an ordered
//! pixel sequence.
//!
//! The two views are paired through their endpoints (the endpoint pair with
//! the smallest point-to-epipolar-line distance gives one start per view),
//! then each skeleton is walked greedily. At every step the candidates are
//! the unvisited 8-neighbours of the current pixel; when there are none the
//! search widens ring by ring up to `r_max` to jump across gaps. With several
//! candidates the one minimizing
//!
//! ```text
//! L(q) = curvature(window + q) + lambda_a * angle(prev, curr, q) + lambda_d * |q - curr|
//! ```
//!
//! is taken, where `curvature` is the curvature of a least-squares parabola
//! through the most recent `window_m` points and the candidate, and `prev`
//! is the point `heading_lag` steps back.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{point_to_epiline_distance, PixelPoint};
use crate::centerline::{Centerline, GridPoint};
use crate::scalar::{real, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcttError {
    #[error("invalid traversal parameters: {0}")]
    InvalidParams(String),
    #[error("no endpoints in view {0} (closed curve)")]
    NoEndpoints(u8),
    #[error("zero-length step in angle penalty")]
    ZeroLengthStep,
    #[error("degenerate quadratic fit: window collapses to a single abscissa")]
    DegenerateFit,
    #[error("window has {got} points, need at least {need}")]
    WindowTooShort { got: usize, need: usize },
    #[error("start point ({0}, {1}) is not on the centerline")]
    StartNotOnCenterline(i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct GcttParams<T> {
    /// Weight of the turning-angle penalty.
    pub lambda_a: T,
    /// Weight of the jump length, per pixel.
    pub lambda_d: T,
    /// Largest jump, pixels.
    pub r_max: T,
    /// Number of recent points used for the curvature fit.
    pub window_m: usize,
    /// Minimum number of points for a quadratic fit.
    pub curvature_window_min: usize,
    /// Curvature charged when the fit is degenerate.
    pub degenerate_curvature: T,
    /// How many steps back the traversal looks for the `prev` point of the
    /// turning-angle term. 1 compares against the last single step; longer
    /// baselines keep the heading stable through thinning junctions.
    pub heading_lag: usize,
}

impl<T: Real> Default for GcttParams<T> {
    fn default() -> Self {
        Self {
            lambda_a: real(1.0),
            lambda_d: real(0.5),
            r_max: real(50.0),
            window_m: 10,
            curvature_window_min: 4,
            degenerate_curvature: real(1e3),
            heading_lag: 10,
        }
    }
}

impl<T: Real> GcttParams<T> {
    pub fn validate(&self) -> Result<(), GcttError> {
        let bad = |m: &str| Err(GcttError::InvalidParams(m.into()));
        if self.lambda_a < T::zero() || self.lambda_d < T::zero() {
            return bad("lambda_a and lambda_d must be non-negative");
        }
        if self.r_max < T::one() {
            return bad("r_max must be at least 1 pixel");
        }
        if self.window_m < 3 {
            return bad("window_m must be at least 3");
        }
        if self.heading_lag == 0 {
            return bad("heading_lag must be at least 1");
        }
        if self.curvature_window_min < 3 || self.curvature_window_min > self.window_m + 1 {
            return bad("curvature_window_min must lie in [3, window_m + 1]");
        }
        Ok(())
    }

    fn r_max_px(&self) -> i64 {
        to_f64(self.r_max).floor() as i64
    }
}

/// Topology-ordered pixel sequence of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSequence<T> {
    pub view: u8,
    pub points: Vec<PixelPoint<T>>,
    /// Set when the skeleton had no endpoints and the start was arbitrary.
    pub closed: bool,
}

impl<T: Real> OrderedSequence<T> {
    pub fn new(view: u8, points: Vec<PixelPoint<T>>) -> Self {
        Self {
            view,
            points,
            closed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the sequence invariants: no repeated point and consecutive
    /// points at most `r_max` apart.
    pub fn check(&self, r_max: T) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = (to_f64(p.u).to_bits(), to_f64(p.v).to_bits());
            if !seen.insert(key) {
                return Err(format!("point {i} ({}, {}) repeats", p.u, p.v));
            }
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if w[0].dist(&w[1]) > r_max {
                return Err(format!("step {i} -> {} exceeds r_max", i + 1));
            }
        }
        Ok(())
    }

    /// Cumulative polyline length at each point.
    pub fn arc_lengths(&self) -> Vec<T> {
        let mut acc = T::zero();
        let mut out = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                acc += self.points[i - 1].dist(p);
            }
            out.push(acc);
        }
        out
    }

    /// CSV with header `index,u,v`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,u,v\n");
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", i, to_f64(p.u), to_f64(p.v));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartPair<T> {
    pub endpoint_1: GridPoint,
    pub endpoint_2: GridPoint,
    pub distance: T,
}

/// Endpoint pair minimizing the point-to-epipolar-line distance. Ties go to
/// the lexicographically smallest view-1 endpoint, then view-2 endpoint.
/// Pairs whose view-2 endpoint sits on the epipole rank last.
pub fn select_start_pair<T: Real>(
    endpoints_1: &[GridPoint],
    endpoints_2: &[GridPoint],
    f: &Matrix3<T>,
) -> Result<StartPair<T>, GcttError> {
    if endpoints_1.is_empty() {
        return Err(GcttError::NoEndpoints(1));
    }
    if endpoints_2.is_empty() {
        return Err(GcttError::NoEndpoints(2));
    }
    let mut best: Option<(f64, GridPoint, GridPoint, T)> = None;
    for &a in endpoints_1 {
        for &b in endpoints_2 {
            let (key, d) = match point_to_epiline_distance(f, &a.to_pixel(), &b.to_pixel()) {
                Ok(d) => (to_f64(d), d),
                Err(_) => (f64::INFINITY, T::max_value().unwrap_or(real(f64::MAX))),
            };
            let better = match &best {
                None => true,
                Some((bk, ba, bb, _)) => match key.partial_cmp(bk) {
                    Some(Ordering::Less) => true,
                    Some(Ordering::Equal) => (a, b) < (*ba, *bb),
                    _ => false,
                },
            };
            if better {
                best = Some((key, a, b, d));
            }
        }
    }
    let (_, endpoint_1, endpoint_2, distance) = best.expect("non-empty product");
    Ok(StartPair {
        endpoint_1,
        endpoint_2,
        distance,
    })
}

/// `1 - cos` of the turn from `prev -> curr` to `curr -> cand`; in [0, 2].
pub fn angle_penalty<T: Real>(
    prev: &PixelPoint<T>,
    curr: &PixelPoint<T>,
    cand: &PixelPoint<T>,
) -> Result<T, GcttError> {
    let (ax, ay) = (curr.u - prev.u, curr.v - prev.v);
    let (bx, by) = (cand.u - curr.u, cand.v - curr.v);
    let na = (ax * ax + ay * ay).sqrt();
    let nb = (bx * bx + by * by).sqrt();
    let eps = real::<T>(1e-12);
    if na < eps || nb < eps {
        return Err(GcttError::ZeroLengthStep);
    }
    let cos = ((ax * bx + ay * by) / (na * nb)).clamp(-T::one(), T::one());
    Ok(T::one() - cos)
}

/// Curvature of the least-squares parabola through `window` (candidate
/// last), evaluated at the candidate.
///
/// The points are expressed in their principal frame (major axis of the
/// second-moment matrix as abscissa) before fitting `y = a x^2 + b x + c`;
/// the curvature is `|2a| / (1 + (2a x_q + b)^2)^(3/2)`.
pub fn window_curvature<T: Real>(
    window: &[PixelPoint<T>],
    min_points: usize,
) -> Result<T, GcttError> {
    let n = window.len();
    if n < min_points.max(3) {
        return Err(GcttError::WindowTooShort {
            got: n,
            need: min_points.max(3),
        });
    }
    let nf = real::<T>(n as f64);
    let (mut mu, mut mv) = (T::zero(), T::zero());
    for p in window {
        mu += p.u;
        mv += p.v;
    }
    mu /= nf;
    mv /= nf;
    let (mut suu, mut svv, mut suv) = (T::zero(), T::zero(), T::zero());
    for p in window {
        let (du, dv) = (p.u - mu, p.v - mv);
        suu += du * du;
        svv += dv * dv;
        suv += du * dv;
    }
    let theta = (suv * real(2.0)).atan2(suu - svv) * real(0.5);
    let (c, s) = (theta.cos(), theta.sin());
    let local: Vec<(T, T)> = window
        .iter()
        .map(|p| {
            let (du, dv) = (p.u - mu, p.v - mv);
            (du * c + dv * s, -du * s + dv * c)
        })
        .collect();

    let (xmin, xmax) = local
        .iter()
        .fold((local[0].0, local[0].0), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if xmax - xmin < real(1e-9) {
        return Err(GcttError::DegenerateFit);
    }

    // normal equations for [a, b, c]
    let mut ata = Matrix3::<T>::zeros();
    let mut aty = Vector3::<T>::zeros();
    for &(x, y) in &local {
        let row = Vector3::new(x * x, x, T::one());
        ata += row * row.transpose();
        aty += row * y;
    }
    let coef = ata
        .cholesky()
        .map(|ch| ch.solve(&aty))
        .or_else(|| ata.lu().solve(&aty))
        .ok_or(GcttError::DegenerateFit)?;
    let (a, b) = (coef[0], coef[1]);
    let xq = local[n - 1].0;
    let slope = a * real(2.0) * xq + b;
    let denom = (T::one() + slope * slope).powf(real(1.5));
    Ok((a * real(2.0)).abs() / denom)
}

/// The three terms of the step loss before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub curvature: T,
    pub angle: T,
    pub jump: T,
}

impl<T: Real> LossTerms<T> {
    pub fn total(&self, params: &GcttParams<T>) -> T {
        self.curvature + params.lambda_a * self.angle + params.lambda_d * self.jump
    }
}

/// Unweighted loss terms for moving from `curr` to `cand`. `window` holds the
/// most recent points ending with `curr`; the curvature term is zero until it
/// holds `window_m` points.
pub fn loss_terms<T: Real>(
    cand: &PixelPoint<T>,
    window: &[PixelPoint<T>],
    curr: &PixelPoint<T>,
    prev: Option<&PixelPoint<T>>,
    params: &GcttParams<T>,
) -> Result<LossTerms<T>, GcttError> {
    let curvature = if window.len() >= params.window_m {
        let mut w: Vec<PixelPoint<T>> = window[window.len() - params.window_m..].to_vec();
        w.push(*cand);
        match window_curvature(&w, params.curvature_window_min) {
            Ok(k) => k,
            Err(GcttError::DegenerateFit) => params.degenerate_curvature,
            Err(e) => return Err(e),
        }
    } else {
        T::zero()
    };
    let angle = match prev {
        Some(p) => angle_penalty(p, curr, cand)?,
        None => T::zero(),
    };
    let jump = cand.dist(curr);
    if jump < real(1e-12) {
        return Err(GcttError::ZeroLengthStep);
    }
    Ok(LossTerms {
        curvature,
        angle,
        jump,
    })
}

/// Weighted step loss `curvature + lambda_a * angle + lambda_d * jump`.
pub fn step_loss<T: Real>(
    cand: &PixelPoint<T>,
    window: &[PixelPoint<T>],
    curr: &PixelPoint<T>,
    prev: Option<&PixelPoint<T>>,
    params: &GcttParams<T>,
) -> Result<T, GcttError> {
    Ok(loss_terms(cand, window, curr, prev, params)?.total(params))
}

/// Unvisited 8-neighbours of `curr`, or, when there are none, the unvisited
/// points of the innermost non-empty ring `k - 1 < |q - curr| <= k` for
/// `k = 2..=r_max`. Empty means the traversal is finished.
///
/// `visited` is indexed like `centerline.points()`.
pub fn candidate_set<T: Real>(
    centerline: &Centerline,
    visited: &[bool],
    curr: GridPoint,
    params: &GcttParams<T>,
) -> Vec<GridPoint> {
    let free = |q: GridPoint| centerline.index_of(q).is_some_and(|i| !visited[i]);
    let near: Vec<GridPoint> = centerline.neighbors(curr).filter(|q| free(*q)).collect();
    if !near.is_empty() {
        return near;
    }
    let r = params.r_max_px();
    if r < 2 {
        return Vec::new();
    }
    let mut best_ring = i64::MAX;
    let mut ring: Vec<GridPoint> = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            let d2 = du * du + dv * dv;
            if d2 > r * r {
                continue;
            }
            let q = GridPoint::new(curr.u + du as i32, curr.v + dv as i32);
            if !free(q) {
                continue;
            }
            // smallest k with d2 <= k^2
            let mut k = (d2 as f64).sqrt().ceil() as i64;
            while k * k < d2 {
                k += 1;
            }
            while k > 0 && (k - 1) * (k - 1) >= d2 {
                k -= 1;
            }
            let k = k.max(2);
            match k.cmp(&best_ring) {
                Ordering::Less => {
                    best_ring = k;
                    ring.clear();
                    ring.push(q);
                }
                Ordering::Equal => ring.push(q),
                Ordering::Greater => {}
            }
        }
    }
    ring
}

/// Greedy ordered walk over `centerline` from `start`.
pub fn traverse<T: Real>(
    centerline: &Centerline,
    start: GridPoint,
    params: &GcttParams<T>,
    view: u8,
) -> Result<OrderedSequence<T>, GcttError> {
    params.validate()?;
    let start_idx = centerline
        .index_of(start)
        .ok_or(GcttError::StartNotOnCenterline(start.u, start.v))?;
    let mut visited = vec![false; centerline.len()];
    visited[start_idx] = true;
    let mut grid = vec![start];
    let mut points: Vec<PixelPoint<T>> = vec![start.to_pixel()];

    loop {
        let curr = *grid.last().expect("non-empty");
        let cands = candidate_set(centerline, &visited, curr, params);
        let next = match cands.len() {
            0 => break,
            1 => cands[0],
            _ => {
                let curr_p = *points.last().expect("non-empty");
                let lag = params.heading_lag.min(points.len() - 1);
                let prev_p = (lag > 0).then(|| points[points.len() - 1 - lag]);
                let window_start = points.len().saturating_sub(params.window_m);
                let window = &points[window_start..];
                let mut scored = Vec::with_capacity(cands.len());
                for q in cands {
                    let qp: PixelPoint<T> = q.to_pixel();
                    let loss = step_loss(&qp, window, &curr_p, prev_p.as_ref(), params)?;
                    scored.push((to_f64(loss), q.dist2(&curr), q));
                }
                pick_min(&scored)
            }
        };
        let idx = centerline.index_of(next).expect("candidate on centerline");
        visited[idx] = true;
        grid.push(next);
        points.push(next.to_pixel());
    }
    Ok(OrderedSequence::new(view, points))
}

fn pick_min(scored: &[(f64, i64, GridPoint)]) -> GridPoint {
    let mut best = scored[0];
    for &s in &scored[1..] {
        let tol = 1e-12 * best.0.abs().max(1.0);
        let better = if s.0 < best.0 - tol {
            true
        } else if (s.0 - best.0).abs() <= tol {
            (s.1, s.2) < (best.1, best.2)
        } else {
            false
        };
        if better {
            best = s;
        }
    }
    best.2
}

/// Both ordered views and the start pair they were seeded from, if any.
pub type OrderedViews<T> = (OrderedSequence<T>, OrderedSequence<T>, Option<StartPair<T>>);

/// Orders both views. Each view starts from its endpoint of the selected
/// start pair; a view without endpoints starts from its topmost-leftmost
/// pixel and is flagged closed.
pub fn order_views<T: Real>(
    view1: &Centerline,
    view2: &Centerline,
    f: &Matrix3<T>,
    params: &GcttParams<T>,
) -> Result<OrderedViews<T>, GcttError> {
    let pair = select_start_pair(view1.endpoints(), view2.endpoints(), f);
    let (s1, s2, pair) = match pair {
        Ok(p) => (p.endpoint_1, p.endpoint_2, Some(p)),
        Err(GcttError::NoEndpoints(_)) => (fallback_start(view1), fallback_start(view2), None),
        Err(e) => return Err(e),
    };
    let mut o1 = traverse(view1, s1, params, 1)?;
    let mut o2 = traverse(view2, s2, params, 2)?;
    o1.closed = view1.endpoints().is_empty();
    o2.closed = view2.endpoints().is_empty();
    Ok((o1, o2, pair))
}

fn fallback_start(cl: &Centerline) -> GridPoint {
    let pool = if cl.endpoints().is_empty() {
        cl.points()
    } else {
        cl.endpoints()
    };
    *pool
        .iter()
        .min_by_key(|p| (p.v, p.u))
        .expect("centerline is non-empty")
}
