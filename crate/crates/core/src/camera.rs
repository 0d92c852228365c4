//! Pinhole cameras, the two-view fundamental matrix, epipolar distances and
//! linear triangulation.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Pose`] is the world-to-camera transform: `X_cam = R * X_world + t`.
//! * Camera frames have `x` to the right, `y` down and `z` along the
//!   optical axis; pixels follow the same orientation.
//! * The fundamental matrix maps a view-2 pixel to its epipolar line in view
//!   1, so corresponding pixels satisfy `n1^T F n2 = 0`. It is built as
//!   `K1^-T [t]x R K2^-1` where `(R, t)` takes view-2 camera coordinates into
//!   view-1 camera coordinates.

use nalgebra::{Matrix3, Matrix4, RowVector4, Vector3};
use thiserror::Error;

use crate::scalar::{real, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("degenerate baseline: camera centers are {0:.3e} mm apart")]
    DegenerateBaseline(f64),
    #[error("fundamental matrix is not rank 2 (singular value ratio {0:.3e})")]
    NotRankTwo(f64),
    #[error("degenerate epipolar line: point coincides with the epipole")]
    DegenerateEpipolarLine,
    #[error("point is behind the camera (depth {0:.3e} mm)")]
    BehindCamera(f64),
    #[error("triangulation unstable: rays are nearly parallel")]
    TriangulationUnstable,
    #[error("non-finite coordinate")]
    NonFinite,
}

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelPoint<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn from_f64(u: f64, v: f64) -> Self {
        Self::new(real(u), real(v))
    }

    pub fn homogeneous(&self) -> Vector3<T> {
        Vector3::new(self.u, self.v, T::one())
    }

    pub fn dist(&self, other: &Self) -> T {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        (du * du + dv * dv).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        to_f64(self.u).is_finite() && to_f64(self.v).is_finite()
    }

    /// `self * (1 - t) + other * t`.
    pub fn lerp(&self, other: &Self, t: T) -> Self {
        Self::new(
            self.u + (other.u - self.u) * t,
            self.v + (other.v - self.v) * t,
        )
    }
}

/// Point in the world frame, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> WorldPoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn dist(&self, other: &Self) -> T {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z].iter().all(|c| to_f64(*c).is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub skew: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, skew: T) -> Result<Self, CameraError> {
        let all_finite = [fx, fy, cx, cy, skew]
            .iter()
            .all(|c| to_f64(*c).is_finite());
        if !all_finite {
            return Err(CameraError::InvalidIntrinsics("non-finite entry".into()));
        }
        if fx <= T::zero() || fy <= T::zero() {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    /// Identity camera matrix (unit focal length, principal point at 0).
    pub fn identity() -> Self {
        Self {
            fx: T::one(),
            fy: T::one(),
            cx: T::zero(),
            cy: T::zero(),
            skew: T::zero(),
        }
    }

    pub fn matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx,
            self.skew,
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    /// Closed-form inverse of the upper-triangular camera matrix.
    pub fn inverse(&self) -> Matrix3<T> {
        let (fx, fy, cx, cy, s) = (self.fx, self.fy, self.cx, self.cy, self.skew);
        let z = T::zero();
        Matrix3::new(
            T::one() / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            z,
            T::one() / fy,
            -cy / fy,
            z,
            z,
            T::one(),
        )
    }

    /// Normalized image coordinates of a pixel.
    pub fn unproject(&self, p: &PixelPoint<T>) -> Vector3<T> {
        self.inverse() * p.homogeneous()
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, CameraError> {
        let tol = real::<T>(T::ROTATION_TOL);
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(ortho < tol && (det - T::one()).abs() < tol) {
            return Err(CameraError::InvalidRotation);
        }
        if !translation.iter().all(|c| to_f64(*c).is_finite()) {
            return Err(CameraError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose of a camera at `center` whose optical axis points at `target`.
    /// `down` is the world direction that should appear as +v in the image.
    pub fn look_at(
        center: Vector3<T>,
        target: Vector3<T>,
        down: Vector3<T>,
    ) -> Result<Self, CameraError> {
        let z = (target - center).normalize();
        let x = down.cross(&z);
        if x.norm() < real(1e-12) {
            return Err(CameraError::InvalidRotation);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(rotation, -(rotation * center))
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis direction in world coordinates.
    pub fn optical_axis(&self) -> Vector3<T> {
        self.rotation.transpose() * Vector3::z()
    }

    pub fn transform(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation * x + self.translation
    }
}

/// One calibrated view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera<T: Real> {
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(intrinsics: Intrinsics<T>, pose: Pose<T>, width: usize, height: usize) -> Self {
        Self {
            intrinsics,
            pose,
            width,
            height,
        }
    }

    pub fn project(&self, x: &WorldPoint<T>) -> Result<PixelPoint<T>, CameraError> {
        project(&self.intrinsics, &self.pose, x)
    }

    pub fn depth(&self, x: &WorldPoint<T>) -> T {
        self.pose.transform(&x.to_vector()).z
    }

    pub fn contains(&self, p: &PixelPoint<T>) -> bool {
        let w = real::<T>(self.width as f64);
        let h = real::<T>(self.height as f64);
        let half = real::<T>(0.5);
        p.u >= -half && p.v >= -half && p.u < w - half && p.v < h - half
    }
}

/// Two calibrated views and their fundamental matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig<T: Real> {
    cam1: Camera<T>,
    cam2: Camera<T>,
    fundamental: Matrix3<T>,
}

impl<T: Real> StereoRig<T> {
    pub fn new(cam1: Camera<T>, cam2: Camera<T>) -> Result<Self, CameraError> {
        let fundamental = fundamental_from_cameras(&cam1, &cam2)?;
        Ok(Self {
            cam1,
            cam2,
            fundamental,
        })
    }

    pub fn cam1(&self) -> &Camera<T> {
        &self.cam1
    }

    pub fn cam2(&self) -> &Camera<T> {
        &self.cam2
    }

    pub fn camera(&self, view: usize) -> &Camera<T> {
        if view == 1 {
            &self.cam1
        } else {
            &self.cam2
        }
    }

    pub fn fundamental(&self) -> &Matrix3<T> {
        &self.fundamental
    }

    /// `(R, t)` taking view-2 camera coordinates into view-1 camera
    /// coordinates.
    pub fn relative_pose(&self) -> (Matrix3<T>, Vector3<T>) {
        relative_pose(&self.cam1.pose, &self.cam2.pose)
    }

    pub fn baseline(&self) -> T {
        (self.cam1.pose.center() - self.cam2.pose.center()).norm()
    }

    /// Angle between the two optical axes, in degrees.
    pub fn separation_deg(&self) -> T {
        let a = self.cam1.pose.optical_axis();
        let b = self.cam2.pose.optical_axis();
        let c = a.dot(&b).clamp(-T::one(), T::one());
        c.acos() * real(180.0 / std::f64::consts::PI)
    }

    /// Millimetres per pixel at the working distance: mean distance from the
    /// camera centers to the world origin over the mean focal length.
    pub fn mm_per_px(&self) -> T {
        let d = (self.cam1.pose.center().norm() + self.cam2.pose.center().norm()) * real(0.5);
        let f = (self.cam1.intrinsics.fx
            + self.cam1.intrinsics.fy
            + self.cam2.intrinsics.fx
            + self.cam2.intrinsics.fy)
            * real(0.25);
        d / f
    }
}

pub fn relative_pose<T: Real>(pose1: &Pose<T>, pose2: &Pose<T>) -> (Matrix3<T>, Vector3<T>) {
    let r = pose1.rotation * pose2.rotation.transpose();
    let t = pose1.translation - r * pose2.translation;
    (r, t)
}

pub fn skew_symmetric<T: Real>(t: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -t.z, t.y, t.z, z, -t.x, -t.y, t.x, z)
}

/// `K1^-T [t]x R K2^-1` for the relative pose of the two cameras.
pub fn fundamental_from_cameras<T: Real>(
    cam1: &Camera<T>,
    cam2: &Camera<T>,
) -> Result<Matrix3<T>, CameraError> {
    let (r, t) = relative_pose(&cam1.pose, &cam2.pose);
    let baseline = t.norm();
    if baseline < real(T::BASELINE_EPS) {
        return Err(CameraError::DegenerateBaseline(to_f64(baseline)));
    }
    let f = cam1.intrinsics.inverse().transpose()
        * skew_symmetric(&t)
        * r
        * cam2.intrinsics.inverse();
    let ratio = rank_ratio(&f);
    if ratio >= T::RANK_RATIO_TOL {
        return Err(CameraError::NotRankTwo(ratio));
    }
    Ok(f)
}

/// The rig's fundamental matrix.
pub fn fundamental_matrix<T: Real>(rig: &StereoRig<T>) -> Matrix3<T> {
    rig.fundamental
}

/// Smallest over largest singular value.
pub fn rank_ratio<T: Real>(m: &Matrix3<T>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max <= T::zero() {
        return 0.0;
    }
    to_f64(sv.min() / max)
}

/// Epipolar line `(a, b, c) = F * (u, v, 1)` in view 1 of a view-2 pixel.
/// Not normalized.
pub fn epipolar_line<T: Real>(f: &Matrix3<T>, p2: &PixelPoint<T>) -> Vector3<T> {
    f * p2.homogeneous()
}

/// Distance in pixels from `p1` to the view-1 epipolar line of `p2`:
/// `|n1^T F n2| / sqrt(a^2 + b^2)` with `(a, b, c) = F n2`.
pub fn point_to_epiline_distance<T: Real>(
    f: &Matrix3<T>,
    p1: &PixelPoint<T>,
    p2: &PixelPoint<T>,
) -> Result<T, CameraError> {
    let line = epipolar_line(f, p2);
    distance_to_line(&line, p1, f.norm_squared() * p2.homogeneous().norm_squared())
}

/// Mean of the two directed point-to-epipolar-line distances.
pub fn symmetric_epiline_distance<T: Real>(
    f: &Matrix3<T>,
    p1: &PixelPoint<T>,
    p2: &PixelPoint<T>,
) -> Result<T, CameraError> {
    let forward = point_to_epiline_distance(f, p1, p2)?;
    let ft = f.transpose();
    let backward = point_to_epiline_distance(&ft, p2, p1)?;
    Ok((forward + backward) * real(0.5))
}

/// Signed distance helper; `scale` is the squared magnitude the line norm is
/// compared against when testing for degeneracy.
fn distance_to_line<T: Real>(
    line: &Vector3<T>,
    p: &PixelPoint<T>,
    scale: T,
) -> Result<T, CameraError> {
    let norm2 = line.x * line.x + line.y * line.y;
    if norm2 <= real::<T>(T::LINE_NORM_TOL) * scale || norm2 <= T::zero() {
        return Err(CameraError::DegenerateEpipolarLine);
    }
    Ok((line.dot(&p.homogeneous())).abs() / norm2.sqrt())
}

/// Signed distance of `p` to `line` (positive on the side the normal points
/// to), or `None` when the line is degenerate.
pub fn signed_line_distance<T: Real>(line: &Vector3<T>, p: &PixelPoint<T>) -> Option<T> {
    let norm2 = line.x * line.x + line.y * line.y;
    if norm2 <= T::zero() {
        return None;
    }
    Some(line.dot(&p.homogeneous()) / norm2.sqrt())
}

/// Pinhole projection `dehomogenize(K [R | t] X)`.
pub fn project<T: Real>(
    intrinsics: &Intrinsics<T>,
    world_pose: &Pose<T>,
    x: &WorldPoint<T>,
) -> Result<PixelPoint<T>, CameraError> {
    let pc = world_pose.transform(&x.to_vector());
    if pc.z <= real(T::DEPTH_EPS) {
        return Err(CameraError::BehindCamera(to_f64(pc.z)));
    }
    let h = intrinsics.matrix() * pc;
    let p = PixelPoint::new(h.x / h.z, h.y / h.z);
    if !p.is_finite() {
        return Err(CameraError::NonFinite);
    }
    Ok(p)
}

/// Linear (DLT) triangulation of one correspondence.
pub fn triangulate<T: Real>(
    rig: &StereoRig<T>,
    p1: &PixelPoint<T>,
    p2: &PixelPoint<T>,
) -> Result<WorldPoint<T>, CameraError> {
    triangulate_views(&rig.cam1, &rig.cam2, p1, p2)
}

/// DLT triangulation on an arbitrary camera pair.
///
/// The system is built in normalized image coordinates and a world frame
/// recentred on the midpoint of the camera centers and scaled by their
/// distance, which keeps all four columns of the 4x4 system commensurate.
pub fn triangulate_views<T: Real>(
    cam1: &Camera<T>,
    cam2: &Camera<T>,
    p1: &PixelPoint<T>,
    p2: &PixelPoint<T>,
) -> Result<WorldPoint<T>, CameraError> {
    if !p1.is_finite() || !p2.is_finite() {
        return Err(CameraError::NonFinite);
    }
    let c1 = cam1.pose.center();
    let c2 = cam2.pose.center();
    let baseline = (c1 - c2).norm();
    if baseline < real(T::BASELINE_EPS) {
        return Err(CameraError::TriangulationUnstable);
    }
    let origin: Vector3<T> = (c1 + c2) * real::<T>(0.5);
    let scale = baseline;

    let mut a = Matrix4::<T>::zeros();
    for (k, (cam, p)) in [(cam1, p1), (cam2, p2)].into_iter().enumerate() {
        let n = cam.intrinsics.unproject(p);
        let (xn, yn) = (n.x / n.z, n.y / n.z);
        let r = cam.pose.rotation();
        let t: Vector3<T> = (r * origin + *cam.pose.translation()) / scale;
        let row = |i: usize| RowVector4::new(r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
        let rows = [row(2) * xn - row(0), row(2) * yn - row(1)];
        for (m, eq) in rows.iter().enumerate() {
            let nrm = eq.norm();
            if nrm > T::zero() {
                a.set_row(2 * k + m, &(eq / nrm));
            }
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(CameraError::TriangulationUnstable)?;
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s = &svd.singular_values;
    let largest = s[order[0]];
    if largest <= T::zero() || s[order[2]] / largest < real(T::TRIANGULATION_TOL) {
        return Err(CameraError::TriangulationUnstable);
    }
    let h = v_t.row(order[3]);
    let w = h[3];
    let hn = h.norm();
    if w.abs() < real::<T>(T::TRIANGULATION_TOL) * hn {
        return Err(CameraError::TriangulationUnstable);
    }
    let y = Vector3::new(h[0] / w, h[1] / w, h[2] / w);
    let x = origin + y * scale;
    let out = WorldPoint::from_vector(&x);
    if !out.is_finite() {
        return Err(CameraError::NonFinite);
    }
    Ok(out)
}

/// Reprojection residuals (px) of `x` against the two observed pixels.
pub fn reprojection_residuals<T: Real>(
    rig: &StereoRig<T>,
    x: &WorldPoint<T>,
    p1: &PixelPoint<T>,
    p2: &PixelPoint<T>,
) -> (T, T) {
    let r1 = rig
        .cam1
        .project(x)
        .map(|q| q.dist(p1))
        .unwrap_or_else(|_| T::max_value().unwrap_or_else(|| real(f64::MAX)));
    let r2 = rig
        .cam2
        .project(x)
        .map(|q| q.dist(p2))
        .unwrap_or_else(|_| T::max_value().unwrap_or_else(|| real(f64::MAX)));
    (r1, r2)
}
