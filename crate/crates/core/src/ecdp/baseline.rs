use super::{Curve3D, EcdpError};
use crate::camera::{epipolar_line, reprojection_residuals, triangulate, PixelPoint, StereoRig};
use crate::gctt::OrderedSequence;
use crate::scalar::{real, Real};

/// Reference matcher without global ordering: each view-2 point is matched
/// to an intersection of its epipolar line with the view-1 polyline. With
/// several intersections the one closest (in the image) to the previous
/// match wins; the very first match takes the earliest intersection along
/// the polyline. View-2 points whose line misses the polyline are skipped.
pub fn naive_intersection_baseline<T: Real>(
    s1: &OrderedSequence<T>,
    s2: &OrderedSequence<T>,
    rig: &StereoRig<T>,
) -> Result<Curve3D<T>, EcdpError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(EcdpError::EmptySequence);
    }
    let f = rig.fundamental();
    let mut prev: Option<PixelPoint<T>> = None;
    let mut out = Curve3D {
        points: Vec::new(),
        residuals: Vec::new(),
        dropped: 0,
    };
    let mut matched = 0usize;
    for p2 in &s2.points {
        let line = epipolar_line(f, p2);
        if line[0] * line[0] + line[1] * line[1] <= T::zero() {
            continue;
        }
        let hits = polyline_hits(&s1.points, &line);
        let chosen = match prev {
            None => hits.first().copied(),
            Some(q) => hits.iter().copied().min_by(|a, b| {
                a.dist(&q)
                    .partial_cmp(&b.dist(&q))
                    .unwrap_or(std::cmp::Ordering::Equal)
            }),
        };
        let Some(p1) = chosen else {
            continue;
        };
        matched += 1;
        prev = Some(p1);
        match triangulate(rig, &p1, p2) {
            Ok(x) => {
                out.residuals.push(reprojection_residuals(rig, &x, &p1, p2));
                out.points.push(x);
            }
            Err(_) => out.dropped += 1,
        }
    }
    if matched == 0 {
        return Err(EcdpError::NoIntersections);
    }
    if out.points.is_empty() {
        return Err(EcdpError::AllPairsDegenerate);
    }
    Ok(out)
}

/// Intersections of the line `l` with consecutive polyline segments, in
/// polyline order. Segments lying on the line are skipped.
fn polyline_hits<T: Real>(pts: &[PixelPoint<T>], l: &nalgebra::Vector3<T>) -> Vec<PixelPoint<T>> {
    let eval = |p: &PixelPoint<T>| l[0] * p.u + l[1] * p.v + l[2];
    let norm = (l[0] * l[0] + l[1] * l[1]).sqrt();
    let eps = norm * real(1e-6);
    let mut hits = Vec::new();
    if pts.len() == 1 {
        if eval(&pts[0]).abs() <= eps {
            hits.push(pts[0]);
        }
        return hits;
    }
    for w in pts.windows(2) {
        let (ga, gb) = (eval(&w[0]), eval(&w[1]));
        if ga.abs() <= eps && gb.abs() <= eps {
            continue;
        }
        if ga.abs() <= eps {
            // counted as the end of the previous segment unless first
            if hits.is_empty() || w[0] != *hits.last().expect("non-empty") {
                hits.push(w[0]);
            }
            continue;
        }
        if (ga < T::zero()) != (gb < T::zero()) || gb.abs() <= eps {
            let t = ga / (ga - gb);
            hits.push(w[0].lerp(&w[1], t));
        }
    }
    hits
}
