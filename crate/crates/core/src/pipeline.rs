//! End-to-end reconstruction of one scene: masks (or ordered pixels) in,
//! ordered 3D curve out, with every intermediate result kept for
//! inspection.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::load_rig;
use crate::camera::StereoRig;
use crate::centerline::{extract_centerline_within, Centerline};
use crate::csvio::{curve_to_csv, curve_to_ply, read_sequence, write_text};
use crate::ecdp::{
    cost_matrix, dp_align, reconstruct, refine, CorrespondenceSet, CostOptions, Curve3D,
};
use crate::gctt::{order_views, GcttParams, OrderedSequence, StartPair};
use crate::mask::{load_mask, save_mask, BinaryMask};
use crate::skeleton::skeletonize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Binary masks, skeletonized and traversed.
    Masks,
    /// Pre-ordered pixel sequences; skeleton and traversal are skipped.
    OrderedPoints,
}

impl std::str::FromStr for InputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "masks" => Ok(Self::Masks),
            "ordered_points" => Ok(Self::OrderedPoints),
            other => Err(format!("unknown input mode `{other}` (masks | ordered_points)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CenterlineConfig {
    /// Skeleton fragments within this distance of the main component are
    /// kept (gaps left by occlusion). `None` uses the traversal `r_max`.
    pub gap_reach_px: Option<f64>,
    /// Fragments smaller than this are discarded as noise.
    pub min_fragment_px: usize,
}

impl Default for CenterlineConfig {
    fn default() -> Self {
        Self {
            gap_reach_px: None,
            min_fragment_px: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EcdpConfig {
    /// Cost of cells with a degenerate epipolar line; `None` is twice the
    /// largest finite cost.
    pub degenerate_penalty: Option<f64>,
    /// Also interpolate view-2 points for one-to-many runs down a column.
    pub refine_vertical: bool,
    /// Symmetric (two-view) epipolar distance instead of view 1 only.
    pub symmetric_distance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Ground truth is resampled to this many points per reconstructed point.
    pub resample_factor: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            resample_factor: crate::metrics::DEFAULT_RESAMPLE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub scene_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Directory holding `ordered_view1.csv` / `ordered_view2.csv` from an
    /// earlier run. Without it, ordered-points mode reads the scene's
    /// `gt_order_view{1,2}.csv`.
    pub ordered_dir: Option<PathBuf>,
}

/// Every tunable of a reconstruction run, loadable from one JSON document.
/// Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input_mode: InputMode,
    pub gctt: GcttParams<f64>,
    pub centerline: CenterlineConfig,
    pub ecdp: EcdpConfig,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_mode: InputMode::Masks,
            gctt: GcttParams::default(),
            centerline: CenterlineConfig::default(),
            ecdp: EcdpConfig::default(),
            metrics: MetricsConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(fail(Stage::Config))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(Stage::Config, path, e))?;
        Self::from_json(&text).map_err(|e| PipelineError {
            stage: Stage::Config,
            source: format!("{}: {}", path.display(), e.source).into(),
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.gctt.validate().map_err(fail(Stage::Config))?;
        if self.metrics.resample_factor == 0 {
            return Err(PipelineError::msg(Stage::Config, "metrics.resample_factor must be positive"));
        }
        if let Some(p) = self.ecdp.degenerate_penalty {
            if !(p.is_finite() && p >= 0.0) {
                return Err(PipelineError::msg(
                    Stage::Config,
                    "ecdp.degenerate_penalty must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn gap_reach(&self) -> f64 {
        self.centerline.gap_reach_px.unwrap_or(self.gctt.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Config,
    Calibration,
    Input,
    Skeleton,
    Centerline,
    Traversal,
    Correspondence,
    Triangulation,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::Calibration => "calibration",
            Self::Input => "input",
            Self::Skeleton => "skeleton",
            Self::Centerline => "centerline",
            Self::Traversal => "traversal",
            Self::Correspondence => "correspondence",
            Self::Triangulation => "triangulation",
            Self::Output => "output",
        }
    }

    /// Stages that fail because of bad user input rather than the pipeline.
    pub fn is_input(self) -> bool {
        matches!(self, Self::Config | Self::Calibration | Self::Input)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: BoxError,
}

impl PipelineError {
    pub fn msg(stage: Stage, msg: impl Into<String>) -> Self {
        Self {
            stage,
            source: msg.into().into(),
        }
    }

    fn io(stage: Stage, path: &Path, e: std::io::Error) -> Self {
        Self::msg(stage, format!("{}: {e}", path.display()))
    }
}

fn fail<E: Into<BoxError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: e.into(),
    }
}

/// What a run starts from.
#[derive(Debug, Clone)]
pub enum SceneInput {
    Masks([BinaryMask; 2]),
    Ordered([OrderedSequence<f64>; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Output of every stage of one run.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub skeletons: Option<[BinaryMask; 2]>,
    pub centerlines: Option<[Centerline; 2]>,
    pub ordered: [OrderedSequence<f64>; 2],
    pub start_pair: Option<StartPair<f64>>,
    pub correspondences: CorrespondenceSet<f64>,
    pub curve: Curve3D<f64>,
    pub timings: Vec<StageTiming>,
}

struct Clock(Vec<StageTiming>);

impl Clock {
    fn time<R>(&mut self, stage: Stage, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.0.push(StageTiming {
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
        r
    }
}

/// Runs skeleton → centerline → traversal (masks only), then epipolar
/// correspondence and triangulation.
pub fn run(
    rig: &StereoRig<f64>,
    input: SceneInput,
    cfg: &PipelineConfig,
) -> Result<Reconstruction, PipelineError> {
    cfg.validate()?;
    let mut clock = Clock(Vec::new());
    let (ordered, skeletons, centerlines, start_pair) = match input {
        SceneInput::Ordered(seqs) => {
            if seqs.iter().any(OrderedSequence::is_empty) {
                return Err(PipelineError::msg(Stage::Input, "empty ordered sequence"));
            }
            (seqs, None, None, None)
        }
        SceneInput::Masks(masks) => {
            let skel = clock.time(Stage::Skeleton, || {
                [skeletonize(&masks[0]), skeletonize(&masks[1])]
            });
            let reach = cfg.gap_reach();
            let min = cfg.centerline.min_fragment_px;
            let cls = clock.time(Stage::Centerline, || -> Result<_, PipelineError> {
                let a = extract_centerline_within(&skel[0], reach, min)
                    .map_err(|e| PipelineError::msg(Stage::Centerline, format!("view 1: {e}")))?;
                let b = extract_centerline_within(&skel[1], reach, min)
                    .map_err(|e| PipelineError::msg(Stage::Centerline, format!("view 2: {e}")))?;
                Ok([a, b])
            })?;
            let f = rig.fundamental();
            let (s1, s2, pair) = clock
                .time(Stage::Traversal, || order_views(&cls[0], &cls[1], f, &cfg.gctt))
                .map_err(fail(Stage::Traversal))?;
            ([s1, s2], Some(skel), Some(cls), pair)
        }
    };

    let opts = CostOptions {
        degenerate_penalty: cfg.ecdp.degenerate_penalty,
        symmetric: cfg.ecdp.symmetric_distance,
    };
    let correspondences = clock
        .time(Stage::Correspondence, || -> Result<_, crate::ecdp::EcdpError> {
            let d = cost_matrix(&ordered[0], &ordered[1], rig.fundamental(), &opts)?;
            let path = dp_align(&d)?;
            refine(&path, &ordered[0], &ordered[1], &d, cfg.ecdp.refine_vertical)
        })
        .map_err(fail(Stage::Correspondence))?;
    let curve = clock
        .time(Stage::Triangulation, || reconstruct(&correspondences, rig))
        .map_err(fail(Stage::Triangulation))?;

    Ok(Reconstruction {
        skeletons,
        centerlines,
        ordered,
        start_pair,
        correspondences,
        curve,
        timings: clock.0,
    })
}

/// Loads the calibration and the inputs the configured mode needs from a
/// scene directory.
pub fn load_input(
    scene_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<(StereoRig<f64>, SceneInput), PipelineError> {
    let rig = load_rig(&scene_dir.join("calib.json")).map_err(fail(Stage::Calibration))?;
    let input = match cfg.input_mode {
        InputMode::Masks => {
            let load = |k: u8| load_mask(&scene_dir.join(format!("view{k}.pgm")));
            SceneInput::Masks([
                load(1).map_err(fail(Stage::Input))?,
                load(2).map_err(fail(Stage::Input))?,
            ])
        }
        InputMode::OrderedPoints => {
            let path = |k: u8| match &cfg.paths.ordered_dir {
                Some(dir) => dir.join(format!("ordered_view{k}.csv")),
                None => scene_dir.join(format!("gt_order_view{k}.csv")),
            };
            SceneInput::Ordered([
                read_sequence(&path(1), 1).map_err(fail(Stage::Input))?,
                read_sequence(&path(2), 2).map_err(fail(Stage::Input))?,
            ])
        }
    };
    Ok((rig, input))
}

/// Files written by [`write_artifacts`] regardless of input mode.
pub const OUTPUT_FILES: [&str; 6] = [
    "curve3d.csv",
    "curve3d.ply",
    "correspondences.csv",
    "ordered_view1.csv",
    "ordered_view2.csv",
    "timing.log",
];

/// Writes the curve, correspondences, ordered sequences, stage timings and,
/// in mask mode, skeletons (`skeleton_view{k}.pgm`) and centerlines
/// (`centerline_view{k}.csv`).
pub fn write_artifacts(rec: &Reconstruction, out_dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(Stage::Output, out_dir, e))?;
    let put = |name: &str, text: &str| {
        write_text(&out_dir.join(name), text).map_err(fail(Stage::Output))
    };
    put("curve3d.csv", &curve_to_csv(&rec.curve))?;
    put("curve3d.ply", &curve_to_ply(&rec.curve))?;
    put("correspondences.csv", &rec.correspondences.to_csv())?;
    put("ordered_view1.csv", &rec.ordered[0].to_csv())?;
    put("ordered_view2.csv", &rec.ordered[1].to_csv())?;
    if let Some(skel) = &rec.skeletons {
        for (k, m) in skel.iter().enumerate() {
            save_mask(m, &out_dir.join(format!("skeleton_view{}.pgm", k + 1)))
                .map_err(fail(Stage::Output))?;
        }
    }
    if let Some(cls) = &rec.centerlines {
        for (k, cl) in cls.iter().enumerate() {
            put(&format!("centerline_view{}.csv", k + 1), &cl.to_csv())?;
        }
    }
    let mut log = String::from("stage,seconds\n");
    for t in &rec.timings {
        log.push_str(&format!("{},{:.6}\n", t.stage, t.seconds));
    }
    put("timing.log", &log)
}

/// Loads a scene directory, reconstructs it and writes the artifacts.
pub fn reconstruct_dir(
    scene_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Reconstruction, PipelineError> {
    let (rig, input) = load_input(scene_dir, cfg)?;
    let rec = run(&rig, input, cfg)?;
    write_artifacts(&rec, out_dir)?;
    Ok(rec)
}
