//! Calibration file: JSON with one block per camera.
//!
//! ```json
//! {
//!   "units": "mm",
//!   "cam1": { "fx": 1000.0, "fy": 1000.0, "cx": 256.0, "cy": 256.0, "skew": 0.0,
//!             "rotation": [1,0,0, 0,1,0, 0,0,1], "translation": [0,0,500],
//!             "width": 512, "height": 512 },
//!   "cam2": { ... }
//! }
//! ```
//!
//! `rotation` and `translation` are the world-to-camera transform, rotation
//! row-major.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Camera, CameraError, Intrinsics, Pose, StereoRig};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed calibration: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: {source}")]
    Camera { path: String, source: CameraError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraBlock {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub units: String,
    pub cam1: CameraBlock,
    pub cam2: CameraBlock,
}

impl CameraBlock {
    pub fn from_camera(cam: &Camera<f64>) -> Self {
        let r = cam.pose.rotation();
        let t = cam.pose.translation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        Self {
            fx: cam.intrinsics.fx,
            fy: cam.intrinsics.fy,
            cx: cam.intrinsics.cx,
            cy: cam.intrinsics.cy,
            skew: cam.intrinsics.skew,
            rotation,
            translation: [t.x, t.y, t.z],
            width: cam.width,
            height: cam.height,
        }
    }

    pub fn to_camera(&self) -> Result<Camera<f64>, CameraError> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.skew)?;
        let r = Matrix3::from_row_slice(&self.rotation);
        let t = Vector3::from_row_slice(&self.translation);
        Ok(Camera::new(k, Pose::new(r, t)?, self.width, self.height))
    }
}

impl CalibrationFile {
    pub fn from_rig(rig: &StereoRig<f64>) -> Self {
        Self {
            units: "mm".into(),
            cam1: CameraBlock::from_camera(rig.cam1()),
            cam2: CameraBlock::from_camera(rig.cam2()),
        }
    }

    pub fn to_rig(&self) -> Result<StereoRig<f64>, CameraError> {
        StereoRig::new(self.cam1.to_camera()?, self.cam2.to_camera()?)
    }
}

pub fn rig_to_json(rig: &StereoRig<f64>) -> String {
    serde_json::to_string_pretty(&CalibrationFile::from_rig(rig)).expect("calibration serializes")
}

pub fn save_rig(rig: &StereoRig<f64>, path: &Path) -> Result<(), CalibError> {
    fs::write(path, rig_to_json(rig) + "\n").map_err(|source| CalibError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_rig(path: &Path) -> Result<StereoRig<f64>, CalibError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CalibError::Io {
        path: p.clone(),
        source,
    })?;
    let file: CalibrationFile = serde_json::from_str(&text).map_err(|e| CalibError::Parse {
        path: p.clone(),
        msg: e.to_string(),
    })?;
    if file.units != "mm" {
        return Err(CalibError::Parse {
            path: p,
            msg: format!("unsupported units {:?}, expected \"mm\"", file.units),
        });
    }
    file.to_rig()
        .map_err(|source| CalibError::Camera { path: p, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_rig, RigPreset};

    #[test]
    fn rig_round_trips_through_json() {
        let rig = make_rig(RigPreset::CArm30, Some(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.json");
        save_rig(&rig, &path).unwrap();
        let back = load_rig(&path).unwrap();
        assert_eq!(back.cam1(), rig.cam1());
        assert_eq!(back.cam2(), rig.cam2());
    }

    #[test]
    fn wrong_units_rejected() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let text = rig_to_json(&rig).replace("\"mm\"", "\"cm\"");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.json");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_rig(&path), Err(CalibError::Parse { .. })));
    }
}
