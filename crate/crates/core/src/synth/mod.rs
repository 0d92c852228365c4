//! Synthetic biplanar scenes with exact ground truth: random smooth 3D
//! curves, calibrated rig presets, rasterized masks and ground-truth pixel
//! orders.

mod curve;
mod render;
mod scene;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CalibError;
use crate::camera::{Camera, CameraError, Intrinsics, Pose, StereoRig};
use crate::csvio::CsvError;
use crate::mask::MaskError;

pub use curve::{catmull_rom, gen_curve, resample_uniform, CurveSpec};
pub use render::{
    count_self_crossings, inject_occlusion, occlusion_arc_range, perturb_mask, project_polyline, render_views,
    MaskNoise, ProjectedSample,
};
pub use scene::{
    generate_scene, load_scene, oracle_pairs, recovered_arc, save_scene, SceneBundle, SceneManifest, SceneSpec,
    SCENE_FILES,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid curve spec: {0}")]
    InvalidSpec(String),
    #[error("unknown rig preset `{0}` (expected orthogonal, carm_30deg or near_degenerate)")]
    UnknownPreset(String),
    #[error("curve sample {index} projects outside view {view}")]
    OutOfFrame { view: u8, index: usize },
    #[error("occlusion would remove {fraction:.1}% of the view's pixels (limit 30%)")]
    GapTooLarge { fraction: f64 },
    #[error("no in-frame curve after {0} attempts")]
    NoValidScene(usize),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Named two-camera geometries. Both cameras sit 500 mm from the origin and
/// look at it; the second is rotated about the world y axis by the preset
/// angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RigPreset {
    #[serde(rename = "orthogonal")]
    Orthogonal,
    #[serde(rename = "carm_30deg")]
    CArm30,
    #[serde(rename = "near_degenerate")]
    NearDegenerate,
}

impl RigPreset {
    pub const ALL: [RigPreset; 3] = [Self::Orthogonal, Self::CArm30, Self::NearDegenerate];

    pub fn name(self) -> &'static str {
        match self {
            Self::Orthogonal => "orthogonal",
            Self::CArm30 => "carm_30deg",
            Self::NearDegenerate => "near_degenerate",
        }
    }

    pub fn separation_deg(self) -> f64 {
        match self {
            Self::Orthogonal => 90.0,
            Self::CArm30 => 30.0,
            Self::NearDegenerate => 5.0,
        }
    }
}

impl fmt::Display for RigPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RigPreset {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SynthError::UnknownPreset(s.to_string()))
    }
}

pub const IMAGE_SIZE: usize = 512;
pub const FOCAL_PX: f64 = 1000.0;
pub const SOURCE_DISTANCE_MM: f64 = 500.0;
/// Largest pose perturbation applied by `make_rig` with a jitter seed.
pub const JITTER_ROTATION_DEG: f64 = 0.2;
pub const JITTER_TRANSLATION_MM: f64 = 1.0;

/// Builds a preset rig; with `jitter_seed` the second camera's pose is
/// perturbed by a random rotation of at most 0.2 degrees and a random
/// translation of at most 1 mm.
pub fn make_rig(preset: RigPreset, jitter_seed: Option<u64>) -> Result<StereoRig<f64>, SynthError> {
    let c = IMAGE_SIZE as f64 / 2.0;
    let k = Intrinsics::new(FOCAL_PX, FOCAL_PX, c, c, 0.0)?;
    let down = Vector3::new(0.0, 1.0, 0.0);
    let target = Vector3::zeros();
    let center1 = Vector3::new(0.0, 0.0, -SOURCE_DISTANCE_MM);
    let theta = preset.separation_deg().to_radians();
    let center2 = Vector3::new(
        SOURCE_DISTANCE_MM * theta.sin(),
        0.0,
        -SOURCE_DISTANCE_MM * theta.cos(),
    );
    let pose1 = Pose::look_at(center1, target, down)?;
    let mut pose2 = Pose::look_at(center2, target, down)?;
    if let Some(seed) = jitter_seed {
        pose2 = jitter_pose(&pose2, seed)?;
    }
    let cam1 = Camera::new(k, pose1, IMAGE_SIZE, IMAGE_SIZE);
    let cam2 = Camera::new(k, pose2, IMAGE_SIZE, IMAGE_SIZE);
    Ok(StereoRig::new(cam1, cam2)?)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

fn jitter_pose(pose: &Pose<f64>, seed: u64) -> Result<Pose<f64>, CameraError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a69_7474_6572);
    let axis = random_unit(&mut rng);
    let angle = rng.random_range(0.0..=JITTER_ROTATION_DEG).to_radians();
    let dr = Rotation3::from_axis_angle(&axis, angle);
    let dt = random_unit(&mut rng).into_inner() * rng.random_range(0.0..=JITTER_TRANSLATION_MM);
    let r = dr.matrix() * pose.rotation();
    // keep the camera centre fixed under the rotation, then shift it
    let center = pose.center() + dt;
    Pose::new(r, -(r * center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{triangulate, PixelPoint, WorldPoint};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn presets_have_expected_separation() {
        for p in RigPreset::ALL {
            let rig = make_rig(p, None).unwrap();
            assert!((rig.separation_deg() - p.separation_deg()).abs() < 1e-9);
            let o = rig.cam1().project(&WorldPoint::new(0.0, 0.0, 0.0)).unwrap();
            assert!((o.u - 256.0).abs() < 1e-9 && (o.v - 256.0).abs() < 1e-9);
        }
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let a1 = rig.cam1().pose.optical_axis();
        let a2 = rig.cam2().pose.optical_axis();
        assert!(a1.dot(&a2).acos().to_degrees() - 90.0 < 1.0);
    }

    #[test]
    fn down_maps_to_increasing_v() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        for cam in [rig.cam1(), rig.cam2()] {
            let a = cam.project(&WorldPoint::new(0.0, 0.0, 0.0)).unwrap();
            let b = cam.project(&WorldPoint::new(0.0, 10.0, 0.0)).unwrap();
            assert!(b.v > a.v + 5.0);
        }
    }

    #[test]
    fn preset_names_round_trip() {
        for p in RigPreset::ALL {
            assert_eq!(p.name().parse::<RigPreset>().unwrap(), p);
        }
        assert!(matches!(
            "fisheye".parse::<RigPreset>(),
            Err(SynthError::UnknownPreset(_))
        ));
    }

    #[test]
    fn jitter_is_small_and_deterministic() {
        let nominal = make_rig(RigPreset::CArm30, None).unwrap();
        let a = make_rig(RigPreset::CArm30, Some(11)).unwrap();
        let b = make_rig(RigPreset::CArm30, Some(11)).unwrap();
        assert_eq!(a.fundamental(), b.fundamental());
        let r = nominal.cam2().pose.rotation().transpose() * a.cam2().pose.rotation();
        let angle = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle <= JITTER_ROTATION_DEG + 1e-9);
        let shift = (a.cam2().pose.center() - nominal.cam2().pose.center()).norm();
        assert!(shift <= JITTER_TRANSLATION_MM + 1e-9);
        assert!(angle > 0.0 || shift > 0.0);
    }

    /// Standard deviation of the 3D triangulation error along its worst
    /// direction (largest principal axis of the error covariance) when both
    /// projections receive isotropic Gaussian pixel noise.
    fn noise_gain(rig: &StereoRig<f64>, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut cov = nalgebra::Matrix3::<f64>::zeros();
        let n = 2000;
        for _ in 0..n {
            let x = WorldPoint::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
            );
            let mut jitter = |p: PixelPoint<f64>| {
                PixelPoint::new(p.u + noise.sample(&mut rng), p.v + noise.sample(&mut rng))
            };
            let p1 = jitter(rig.cam1().project(&x).unwrap());
            let p2 = jitter(rig.cam2().project(&x).unwrap());
            let e = triangulate(rig, &p1, &p2).unwrap().to_vector() - x.to_vector();
            cov += e * e.transpose();
        }
        cov /= n as f64;
        cov.symmetric_eigenvalues().max().sqrt()
    }

    #[test]
    fn near_degenerate_amplifies_noise() {
        let ortho = noise_gain(&make_rig(RigPreset::Orthogonal, None).unwrap(), 5);
        let near = noise_gain(&make_rig(RigPreset::NearDegenerate, None).unwrap(), 5);
        assert!(near >= 10.0 * ortho, "near {near} vs orthogonal {ortho}");
    }
}
