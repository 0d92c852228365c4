//! Scalar abstraction shared by the geometric modules.
//!
//! Everything that does floating-point geometry is generic over [`Real`],
//! implemented for `f32` and `f64`. Numerical thresholds live on the trait
//! so each precision carries its own headroom over machine epsilon.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the camera, traversal, alignment and
/// metric code.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Upper bound on `sigma_min / sigma_max` for a matrix to count as
    /// rank-deficient (fundamental matrix rank check).
    const RANK_RATIO_TOL: f64;
    /// Relative squared norm below which an epipolar line is degenerate.
    const LINE_NORM_TOL: f64;
    /// Ratio of the third to the first singular value of the triangulation
    /// system below which the two rays are treated as parallel.
    const TRIANGULATION_TOL: f64;
    /// Minimum depth (mm) in front of a camera.
    const DEPTH_EPS: f64;
    /// Minimum baseline length (mm).
    const BASELINE_EPS: f64;
    /// Tolerance for rotation orthonormality checks.
    const ROTATION_TOL: f64;
}

impl Real for f64 {
    const RANK_RATIO_TOL: f64 = 1e-10;
    const LINE_NORM_TOL: f64 = 1e-18;
    const TRIANGULATION_TOL: f64 = 1e-12;
    const DEPTH_EPS: f64 = 1e-9;
    const BASELINE_EPS: f64 = 1e-9;
    const ROTATION_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const RANK_RATIO_TOL: f64 = 1e-5;
    const LINE_NORM_TOL: f64 = 1e-10;
    const TRIANGULATION_TOL: f64 = 1e-6;
    const DEPTH_EPS: f64 = 1e-4;
    const BASELINE_EPS: f64 = 1e-4;
    const ROTATION_TOL: f64 = 1e-4;
}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Converts a scalar back to `f64` for reporting and file output.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
