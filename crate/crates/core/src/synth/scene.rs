use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::{coarse_projection, project_polyline};
use super::{count_self_crossings, gen_curve, make_rig, render_views, CurveSpec, RigPreset, SynthError};
use crate::calib::{load_rig, save_rig};
use crate::camera::{PixelPoint, StereoRig};
use crate::csvio::{gt_curve_to_csv, read_gt_curve, read_sequence, write_text};
use crate::ecdp::Curve3D;
use crate::gctt::OrderedSequence;
use crate::mask::{load_mask, save_mask, BinaryMask};

/// Files written by [`save_scene`], in a fixed order.
pub const SCENE_FILES: [&str; 7] = [
    "calib.json",
    "view1.pgm",
    "view2.pgm",
    "gt_curve.csv",
    "gt_order_view1.csv",
    "gt_order_view2.csv",
    "manifest.json",
];

/// Everything needed to generate one scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub curve: CurveSpec,
    pub preset: RigPreset,
    pub stroke_px: f64,
    /// When set, the stored calibration is a perturbed copy of the rig the
    /// masks were rendered with.
    pub jitter_seed: Option<u64>,
    /// Curves leaving the image are regenerated with a derived seed up to
    /// this many times.
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            curve: CurveSpec::default(),
            preset: RigPreset::Orthogonal,
            stroke_px: 2.0,
            jitter_seed: None,
            max_attempts: 50,
        }
    }
}

/// Ground truth and rendered inputs of one synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub curve: Curve3D<f64>,
    /// Arc length of each curve sample, mm.
    pub arc: Vec<f64>,
    /// Calibration handed to the reconstruction.
    pub rig: StereoRig<f64>,
    /// Rig the masks were rendered with (differs from `rig` under jitter).
    pub render_rig: StereoRig<f64>,
    pub masks: [BinaryMask; 2],
    /// Ground-truth pixel order per view.
    pub ordered: [OrderedSequence<f64>; 2],
    /// Arc length of each ground-truth ordered pixel.
    pub ordered_arc: [Vec<f64>; 2],
    pub stroke_px: f64,
    pub spec: Option<SceneManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub format: String,
    pub spec: SceneSpec,
    /// Seed of the curve actually used after out-of-frame retries.
    pub curve_seed: u64,
    pub attempts: usize,
    pub n_gt_samples: usize,
    pub self_crossings: [usize; 2],
    pub files: Vec<String>,
}

pub const SCENE_FORMAT: &str = "continuum-scene/1";

impl SceneBundle {
    /// Projected self-crossings per view.
    pub fn self_crossings(&self) -> Result<[usize; 2], SynthError> {
        let mut out = [0; 2];
        for view in 1..=2u8 {
            let cam = self.render_rig.camera(view as usize);
            let smp = project_polyline(&self.curve, &self.arc, cam, view)?;
            out[view as usize - 1] = count_self_crossings(&coarse_projection(&smp));
        }
        Ok(out)
    }

    pub fn mask(&self, view: u8) -> &BinaryMask {
        &self.masks[view as usize - 1]
    }
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates a scene, regenerating the curve with derived seeds while any
/// sample falls within `stroke_px + 2` pixels of an image border.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneBundle, SynthError> {
    spec.curve.validate()?;
    let render_rig = make_rig(spec.preset, None)?;
    let rig = match spec.jitter_seed {
        Some(s) => make_rig(spec.preset, Some(s))?,
        None => render_rig,
    };
    let margin = spec.stroke_px.max(0.0) + 2.0;
    for attempt in 0..spec.max_attempts.max(1) {
        let curve_spec = CurveSpec {
            seed: attempt_seed(spec.curve.seed, attempt),
            ..spec.curve
        };
        let (curve, arc) = gen_curve(&curve_spec)?;
        if !inside_with_margin(&curve, &render_rig, margin) {
            continue;
        }
        let mut bundle = render_views(&curve, &arc, &render_rig, spec.stroke_px)?;
        bundle.rig = rig;
        let crossings = bundle.self_crossings()?;
        bundle.spec = Some(SceneManifest {
            format: SCENE_FORMAT.to_string(),
            spec: *spec,
            curve_seed: curve_spec.seed,
            attempts: attempt + 1,
            n_gt_samples: curve.len(),
            self_crossings: crossings,
            files: SCENE_FILES.iter().map(|s| s.to_string()).collect(),
        });
        return Ok(bundle);
    }
    Err(SynthError::NoValidScene(spec.max_attempts.max(1)))
}

fn inside_with_margin(curve: &Curve3D<f64>, rig: &StereoRig<f64>, margin: f64) -> bool {
    [rig.cam1(), rig.cam2()].iter().all(|cam| {
        curve.points.iter().all(|x| {
            cam.project(x).is_ok_and(|p| {
                p.u >= margin
                    && p.v >= margin
                    && p.u <= cam.width as f64 - 1.0 - margin
                    && p.v <= cam.height as f64 - 1.0 - margin
            })
        })
    })
}

/// Ground-truth correspondences: each view-1 ordered pixel paired with the
/// view-2 ordered pixel of closest arc length.
pub fn oracle_pairs(bundle: &SceneBundle) -> Vec<(PixelPoint<f64>, PixelPoint<f64>)> {
    let (a1, a2) = (&bundle.ordered_arc[0], &bundle.ordered_arc[1]);
    let (p1, p2) = (&bundle.ordered[0].points, &bundle.ordered[1].points);
    // the walks are de-duplicated, so arcs are increasing but may jump
    let mut sorted2: Vec<usize> = (0..a2.len()).collect();
    sorted2.sort_by(|&i, &j| a2[i].total_cmp(&a2[j]));
    p1.iter()
        .zip(a1)
        .filter_map(|(p, &s)| {
            let k = sorted2.partition_point(|&i| a2[i] < s);
            let best = [k.checked_sub(1), (k < sorted2.len()).then_some(k)]
                .into_iter()
                .flatten()
                .map(|k| sorted2[k])
                .min_by(|&i, &j| (a2[i] - s).abs().total_cmp(&(a2[j] - s).abs()))?;
            Some((*p, p2[best]))
        })
        .collect()
}

/// Ground-truth arc length of every pixel of a recovered ordered sequence.
///
/// Each pixel is matched to the projected curve samples within `radius`
/// pixels; among those, the sample whose arc length is closest to the
/// previous pixel's is taken, so pixels near a projected self-crossing
/// follow the branch being walked. A pixel with no sample in range takes
/// the nearest sample overall.
pub fn recovered_arc(
    bundle: &SceneBundle,
    seq: &OrderedSequence<f64>,
    radius: f64,
) -> Result<Vec<f64>, SynthError> {
    let cam = bundle.render_rig.camera(seq.view as usize);
    let samples = project_polyline(&bundle.curve, &bundle.arc, cam, seq.view)?;
    let r2 = radius * radius;
    let mut out: Vec<f64> = Vec::with_capacity(seq.len());
    for p in &seq.points {
        let d2 = |q: &PixelPoint<f64>| (q.u - p.u).powi(2) + (q.v - p.v).powi(2);
        let near = samples.iter().filter(|smp| d2(&smp.p) <= r2);
        let pick = match out.last() {
            Some(&prev) => near.min_by(|a, b| (a.s - prev).abs().total_cmp(&(b.s - prev).abs())),
            None => near.min_by(|a, b| d2(&a.p).total_cmp(&d2(&b.p))),
        };
        let pick = pick.or_else(|| samples.iter().min_by(|a, b| d2(&a.p).total_cmp(&d2(&b.p))));
        out.push(pick.map_or(0.0, |smp| smp.s));
    }
    Ok(out)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Writes the scene directory (see [`SCENE_FILES`]).
pub fn save_scene(bundle: &SceneBundle, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    save_rig(&bundle.rig, &dir.join("calib.json"))?;
    save_mask(&bundle.masks[0], &dir.join("view1.pgm"))?;
    save_mask(&bundle.masks[1], &dir.join("view2.pgm"))?;
    write_text(&dir.join("gt_curve.csv"), &gt_curve_to_csv(&bundle.curve, &bundle.arc))?;
    write_text(&dir.join("gt_order_view1.csv"), &bundle.ordered[0].to_csv())?;
    write_text(&dir.join("gt_order_view2.csv"), &bundle.ordered[1].to_csv())?;
    let manifest = match &bundle.spec {
        Some(m) => m.clone(),
        None => SceneManifest {
            format: SCENE_FORMAT.to_string(),
            spec: SceneSpec {
                stroke_px: bundle.stroke_px,
                ..Default::default()
            },
            curve_seed: 0,
            attempts: 0,
            n_gt_samples: bundle.curve.len(),
            self_crossings: bundle.self_crossings().unwrap_or([0, 0]),
            files: SCENE_FILES.iter().map(|s| s.to_string()).collect(),
        },
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Reads a scene directory written by [`save_scene`]. Ordered-pixel arc
/// lengths are recovered by projecting the ground-truth curve.
pub fn load_scene(dir: &Path) -> Result<SceneBundle, SynthError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: SceneManifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let rig = load_rig(&dir.join("calib.json"))?;
    let render_rig = match manifest.spec.jitter_seed {
        Some(_) => make_rig(manifest.spec.preset, None)?,
        None => rig,
    };
    let masks = [
        load_mask(&dir.join("view1.pgm"))?,
        load_mask(&dir.join("view2.pgm"))?,
    ];
    let (curve, arc) = read_gt_curve(&dir.join("gt_curve.csv"))?;
    let ordered = [
        read_sequence(&dir.join("gt_order_view1.csv"), 1)?,
        read_sequence(&dir.join("gt_order_view2.csv"), 2)?,
    ];
    let rendered = render_views(&curve, &arc, &render_rig, manifest.spec.stroke_px)?;
    Ok(SceneBundle {
        curve,
        arc,
        rig,
        render_rig,
        masks,
        ordered,
        ordered_arc: rendered.ordered_arc,
        stroke_px: manifest.spec.stroke_px,
        spec: Some(manifest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::triangulate;
    use crate::ecdp::Curve3D;

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec {
            curve: CurveSpec { seed: 7, loop_bias: 0.5, ..Default::default() },
            ..Default::default()
        };
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip() {
        let spec = SceneSpec {
            curve: CurveSpec { seed: 3, ..Default::default() },
            jitter_seed: Some(2),
            ..Default::default()
        };
        let a = generate_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_scene(&a, dir.path()).unwrap();
        let mut names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let mut expected: Vec<String> = SCENE_FILES.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(names, expected);
        let b = load_scene(dir.path()).unwrap();
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.ordered, b.ordered);
        assert_eq!(a.ordered_arc, b.ordered_arc);
        assert_eq!(a.curve.points, b.curve.points);
        assert_eq!(a.spec, b.spec);
        assert!((a.rig.fundamental() - b.rig.fundamental()).norm() < 1e-12 * a.rig.fundamental().norm());
    }

    #[test]
    fn oracle_pairs_triangulate_close_to_truth() {
        let spec = SceneSpec {
            curve: CurveSpec { seed: 11, ..Default::default() },
            ..Default::default()
        };
        let b = generate_scene(&spec).unwrap();
        let pts: Vec<_> = oracle_pairs(&b)
            .iter()
            .map(|(p1, p2)| triangulate(&b.rig, p1, p2).unwrap())
            .collect();
        let recon = Curve3D::from_points(pts);
        let m = crate::metrics::evaluate(&recon, &b.curve, None).unwrap();
        let px = b.rig.mm_per_px();
        assert!(m.overall < 0.5 * px, "overall {} mm vs {} mm/px", m.overall, px);
    }
}
