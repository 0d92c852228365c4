//! Epipolar-constrained correspondence between two ordered sequences.
//!
//! 1. [`cost_matrix`]: `D[i][j]` is the distance from view-1 point `i` to the
//!    epipolar line of view-2 point `j`.
//! 2. [`dp_align`]: globally optimal monotone path through `D`.
//! 3. [`refine`]: one match per view-2 point; runs of several view-2 points
//!    on one view-1 row are replaced by distance-weighted interpolation
//!    between neighbouring view-1 points.
//! 4. [`reconstruct`]: linear triangulation of every match.

mod baseline;
mod dp;
mod refine;

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{
    point_to_epiline_distance, reprojection_residuals, symmetric_epiline_distance, triangulate,
    CameraError, StereoRig, WorldPoint,
};
use crate::gctt::OrderedSequence;
use crate::scalar::{real, to_f64, Real};

pub use baseline::naive_intersection_baseline;
pub use dp::{dp_align, MonotonePath};
pub use refine::{refine, CorrespondencePair, CorrespondenceSet, ExtraPair, MatchKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcdpError {
    #[error("empty ordered sequence")]
    EmptySequence,
    #[error("path does not fit a {rows}x{cols} cost matrix")]
    InvalidPath { rows: usize, cols: usize },
    #[error("no correspondence could be triangulated")]
    AllPairsDegenerate,
    #[error("no epipolar line intersects the view-1 polyline")]
    NoIntersections,
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Dense `rows x cols` matrix of matching costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<C> {
    rows: usize,
    cols: usize,
    values: Vec<C>,
    degenerate: Vec<bool>,
}

impl<C: Copy> CostMatrix<C> {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> C) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            values,
            degenerate: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C {
        self.values[i * self.cols + j]
    }

    /// True where the epipolar line was degenerate and the penalty was used.
    pub fn is_degenerate(&self, i: usize, j: usize) -> bool {
        self.degenerate[i * self.cols + j]
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&b| b).count()
    }

    pub fn map<D: Copy>(&self, f: impl Fn(C) -> D) -> CostMatrix<D> {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            degenerate: self.degenerate.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostOptions<T> {
    /// Cost for cells whose epipolar line is degenerate; `None` means twice
    /// the largest finite entry.
    pub degenerate_penalty: Option<T>,
    /// Average the two directed distances instead of measuring in view 1
    /// only.
    pub symmetric: bool,
}

impl<T> Default for CostOptions<T> {
    fn default() -> Self {
        Self {
            degenerate_penalty: None,
            symmetric: false,
        }
    }
}

/// Point-to-epipolar-line cost of every view-1/view-2 pair.
pub fn cost_matrix<T: Real>(
    s1: &OrderedSequence<T>,
    s2: &OrderedSequence<T>,
    f: &nalgebra::Matrix3<T>,
    opts: &CostOptions<T>,
) -> Result<CostMatrix<T>, EcdpError> {
    let (n1, n2) = (s1.len(), s2.len());
    if n1 == 0 || n2 == 0 {
        return Err(EcdpError::EmptySequence);
    }
    let cells: Vec<Option<T>> = s1
        .points
        .par_iter()
        .flat_map_iter(|p1| {
            s2.points.iter().map(move |p2| {
                let d = if opts.symmetric {
                    symmetric_epiline_distance(f, p1, p2)
                } else {
                    point_to_epiline_distance(f, p1, p2)
                };
                d.ok().filter(|v| to_f64(*v).is_finite())
            })
        })
        .collect();
    let finite_max = cells
        .iter()
        .flatten()
        .fold(T::zero(), |m, &v| if v > m { v } else { m });
    let penalty = opts.degenerate_penalty.unwrap_or_else(|| {
        if finite_max > T::zero() {
            finite_max * real(2.0)
        } else {
            T::one()
        }
    });
    let degenerate: Vec<bool> = cells.iter().map(Option::is_none).collect();
    let values = cells.into_iter().map(|c| c.unwrap_or(penalty)).collect();
    Ok(CostMatrix {
        rows: n1,
        cols: n2,
        values,
        degenerate,
    })
}

/// Ordered 3D points with their reprojection residuals (px) in both views.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve3D<T> {
    pub points: Vec<WorldPoint<T>>,
    pub residuals: Vec<(T, T)>,
    /// Correspondences that could not be triangulated.
    pub dropped: usize,
}

impl<T: Real> Curve3D<T> {
    pub fn from_points(points: Vec<WorldPoint<T>>) -> Self {
        let residuals = vec![(T::zero(), T::zero()); points.len()];
        Self {
            points,
            residuals,
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> T {
        self.points
            .windows(2)
            .fold(T::zero(), |acc, w| acc + w[0].dist(&w[1]))
    }

    /// Largest distance between consecutive points.
    pub fn max_step(&self) -> T {
        self.points
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .fold(T::zero(), |m, d| if d > m { d } else { m })
    }
}

/// Triangulates every correspondence in order. Pairs that fail to
/// triangulate are dropped and counted.
pub fn reconstruct<T: Real>(
    corr: &CorrespondenceSet<T>,
    rig: &StereoRig<T>,
) -> Result<Curve3D<T>, EcdpError> {
    let pairs = corr.ordered_pixel_pairs();
    if pairs.is_empty() {
        return Err(EcdpError::EmptySequence);
    }
    let solved: Vec<_> = pairs
        .par_iter()
        .map(|(p1, p2)| {
            triangulate(rig, p1, p2)
                .ok()
                .map(|x| (x, reprojection_residuals(rig, &x, p1, p2)))
        })
        .collect();
    let mut out = Curve3D {
        points: Vec::with_capacity(pairs.len()),
        residuals: Vec::with_capacity(pairs.len()),
        dropped: 0,
    };
    for s in solved {
        match s {
            Some((x, r)) => {
                out.points.push(x);
                out.residuals.push(r);
            }
            None => out.dropped += 1,
        }
    }
    if out.points.is_empty() {
        return Err(EcdpError::AllPairsDegenerate);
    }
    if out.dropped > 0 {
        log::warn!("{} correspondences failed to triangulate", out.dropped);
    }
    Ok(out)
}
