//! Batch evaluation over seeds in three input modes: clean rendered masks,
//! ground-truth ordered points, and perturbed masks.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{evaluate, ReconMetrics};
use crate::pipeline::{run, PipelineConfig, SceneInput};
use crate::synth::{generate_scene, perturb_mask, MaskNoise, SceneBundle, SceneSpec, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Rendered masks as produced by the synthesizer.
    GtMask,
    /// Ground-truth ordered pixels; skeleton and traversal are skipped.
    OrderedPoints,
    /// Masks with boundary noise, standing in for a segmentation network.
    EndToEnd,
}

impl BenchMode {
    pub const ALL: [BenchMode; 3] = [Self::GtMask, Self::OrderedPoints, Self::EndToEnd];

    pub fn name(self) -> &'static str {
        match self {
            Self::GtMask => "gt_mask",
            Self::OrderedPoints => "ordered_points",
            Self::EndToEnd => "end_to_end",
        }
    }
}

/// Settings of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub n_seeds: u64,
    /// Template scene; its curve seed is replaced by each batch seed.
    pub scene: SceneSpec,
    pub config: PipelineConfig,
    /// Noise for end-to-end mode; its seed is derived per scene and view.
    pub noise: MaskNoise,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            n_seeds: 5,
            scene: SceneSpec::default(),
            config: PipelineConfig::default(),
            noise: MaskNoise::default(),
            threads: None,
        }
    }
}

/// Outcome of one seed in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRecord {
    pub seed: u64,
    pub mode: BenchMode,
    /// Metrics in millimetres, or the failure message.
    pub result: Result<ReconMetrics, String>,
    /// Millimetres per pixel of the scene's rig.
    pub mm_per_px: f64,
    /// Refinement-contract violations (size, order, convexity).
    pub contract_violations: usize,
    pub first_violation: Option<String>,
}

/// Mean metrics of the successful seeds of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: BenchMode,
    pub n_ok: usize,
    pub n_failed: usize,
    pub accuracy_mm: f64,
    pub completeness_mm: f64,
    pub overall_mm: f64,
    pub max_error_mm: f64,
    pub overall_px: f64,
    pub max_error_px: f64,
    pub contract_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<SeedRecord>,
    pub summaries: Vec<ModeSummary>,
}

fn noise_seed(base: u64, seed: u64, view: u8) -> u64 {
    base ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((view as u64) << 56)
}

/// Scene for `seed` built from the template in `spec`.
pub fn default_scene(spec: &BenchSpec, seed: u64) -> Result<SceneBundle, SynthError> {
    let mut s = spec.scene;
    s.curve.seed = seed;
    generate_scene(&s)
}

fn input_for(
    spec: &BenchSpec,
    bundle: &SceneBundle,
    seed: u64,
    mode: BenchMode,
) -> Result<SceneInput, String> {
    Ok(match mode {
        BenchMode::GtMask => SceneInput::Masks(bundle.masks.clone()),
        BenchMode::OrderedPoints => SceneInput::Ordered(bundle.ordered.clone()),
        BenchMode::EndToEnd => {
            let noisy = |view: u8| {
                let noise = MaskNoise {
                    seed: noise_seed(spec.noise.seed, seed, view),
                    ..spec.noise
                };
                perturb_mask(bundle, view, &noise).map_err(|e| format!("noise: {e}"))
            };
            SceneInput::Masks([noisy(1)?, noisy(2)?])
        }
    })
}

fn run_one(spec: &BenchSpec, bundle: &SceneBundle, seed: u64, mode: BenchMode) -> SeedRecord {
    let mm_per_px = bundle.rig.mm_per_px();
    let mut record = SeedRecord {
        seed,
        mode,
        result: Err(String::new()),
        mm_per_px,
        contract_violations: 0,
        first_violation: None,
    };
    let outcome = input_for(spec, bundle, seed, mode).and_then(|input| {
        run(&bundle.rig, input, &spec.config).map_err(|e| e.to_string())
    });
    record.result = outcome.and_then(|rec| {
        let (count, first) = rec
            .correspondences
            .contract_violations(&rec.ordered[0], rec.ordered[1].len());
        record.contract_violations = count;
        record.first_violation = first;
        let n = spec.config.metrics.resample_factor * rec.curve.len();
        evaluate(&rec.curve, &bundle.curve, Some(n)).map_err(|e| format!("metrics: {e}"))
    });
    record
}

/// Runs every seed in every mode with the default scene generator.
pub fn run_bench(spec: &BenchSpec) -> BenchReport {
    run_bench_with(spec, |seed| default_scene(spec, seed))
}

/// Runs every seed in every mode, building scenes with `factory`. A seed
/// whose scene or pipeline fails is recorded and the batch continues.
pub fn run_bench_with<F>(spec: &BenchSpec, factory: F) -> BenchReport
where
    F: Fn(u64) -> Result<SceneBundle, SynthError> + Sync,
{
    let work = || -> Vec<SeedRecord> {
        (0..spec.n_seeds)
            .into_par_iter()
            .flat_map_iter(|seed| match factory(seed) {
                Ok(bundle) => BenchMode::ALL
                    .iter()
                    .map(|&m| run_one(spec, &bundle, seed, m))
                    .collect::<Vec<_>>(),
                Err(e) => BenchMode::ALL
                    .iter()
                    .map(|&mode| SeedRecord {
                        seed,
                        mode,
                        result: Err(format!("scene: {e}")),
                        mm_per_px: f64::NAN,
                        contract_violations: 0,
                        first_violation: None,
                    })
                    .collect(),
            })
            .collect()
    };
    let records = match spec.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                work()
            }
        },
        None => work(),
    };
    let summaries = BenchMode::ALL.iter().map(|&m| summarize(&records, m)).collect();
    BenchReport { records, summaries }
}

fn summarize(records: &[SeedRecord], mode: BenchMode) -> ModeSummary {
    let mine: Vec<&SeedRecord> = records.iter().filter(|r| r.mode == mode).collect();
    let ok: Vec<(&ReconMetrics, f64)> = mine
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|m| (m, r.mm_per_px)))
        .collect();
    let mean = |f: &dyn Fn(&ReconMetrics, f64) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|(m, s)| f(m, *s)).sum::<f64>() / ok.len() as f64
        }
    };
    ModeSummary {
        mode,
        n_ok: ok.len(),
        n_failed: mine.len() - ok.len(),
        accuracy_mm: mean(&|m, _| m.accuracy),
        completeness_mm: mean(&|m, _| m.completeness),
        overall_mm: mean(&|m, _| m.overall),
        max_error_mm: mean(&|m, _| m.max_error),
        overall_px: mean(&|m, s| m.overall / s),
        max_error_px: mean(&|m, s| m.max_error / s),
        contract_violations: mine.iter().map(|r| r.contract_violations).sum(),
    }
}

impl BenchReport {
    pub fn summary(&self, mode: BenchMode) -> &ModeSummary {
        self.summaries
            .iter()
            .find(|s| s.mode == mode)
            .expect("every mode is summarized")
    }

    pub fn failures(&self) -> impl Iterator<Item = (&SeedRecord, &str)> {
        self.records
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r, e.as_str())))
    }

    /// One row per mode: `mode,n_ok,n_failed,accuracy_mm,completeness_mm,
    /// overall_mm,max_error_mm,overall_px,max_error_px,contract_violations`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "mode,n_ok,n_failed,accuracy_mm,completeness_mm,overall_mm,max_error_mm,overall_px,max_error_px,contract_violations\n",
        );
        for r in &self.summaries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.mode.name(),
                r.n_ok,
                r.n_failed,
                r.accuracy_mm,
                r.completeness_mm,
                r.overall_mm,
                r.max_error_mm,
                r.overall_px,
                r.max_error_px,
                r.contract_violations
            );
        }
        s
    }

    /// Per-seed results: `seed,mode,status,accuracy_mm,completeness_mm,
    /// overall_mm,max_error_mm,contract_violations,message`.
    pub fn seeds_csv(&self) -> String {
        let mut rows: Vec<&SeedRecord> = self.records.iter().collect();
        rows.sort_by_key(|r| (r.seed, r.mode));
        let mut s = String::from(
            "seed,mode,status,accuracy_mm,completeness_mm,overall_mm,max_error_mm,contract_violations,message\n",
        );
        for r in rows {
            match &r.result {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{},{},ok,{},{},{},{},{},",
                        r.seed,
                        r.mode.name(),
                        m.accuracy,
                        m.completeness,
                        m.overall,
                        m.max_error,
                        r.contract_violations
                    );
                }
                Err(e) => {
                    let msg = e.replace(['"', '\n'], " ");
                    let _ = writeln!(s, "{},{},failed,,,,,0,\"{msg}\"", r.seed, r.mode.name());
                }
            }
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| mode | ok | failed | acc (mm) | comp (mm) | overall (mm) | max err (mm) | overall (px) | max err (px) |\n\
             |---|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.summaries {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.3} | {:.3} |",
                r.mode.name(),
                r.n_ok,
                r.n_failed,
                r.accuracy_mm,
                r.completeness_mm,
                r.overall_mm,
                r.max_error_mm,
                r.overall_px,
                r.max_error_px
            );
        }
        let mut failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            failures.sort_by_key(|(r, _)| (r.seed, r.mode));
            s.push_str("\nFailures:\n\n");
            for (r, e) in failures {
                let _ = writeln!(s, "- seed {} ({}): {}", r.seed, r.mode.name(), e);
            }
        }
        s
    }
}
