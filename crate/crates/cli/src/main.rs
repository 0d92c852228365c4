use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use continuum_core::bench::{run_bench, BenchSpec};
use continuum_core::csvio::read_curve;
use continuum_core::metrics::evaluate;
use continuum_core::pipeline::{reconstruct_dir, InputMode, PipelineConfig, PipelineError};
use continuum_core::synth::{generate_scene, inject_occlusion, save_scene, RigPreset, SceneSpec};
use continuum_core::Curve3DF64;

#[derive(Parser)]
#[command(name = "continuum", version, about = "Two-view 3D centerline reconstruction of slender bodies")]
struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory with exact ground truth.
    Synth(SynthArgs),
    /// Reconstruct the 3D centerline of a scene directory.
    Reconstruct(ReconstructArgs),
    /// Score a reconstructed curve against a ground-truth curve.
    Eval(EvalArgs),
    /// Synthesize, reconstruct and score seeds 0..n in every input mode.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rig preset: orthogonal, carm_30deg or near_degenerate.
    #[arg(long, default_value = "orthogonal")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_control: Option<usize>,
    #[arg(long)]
    length_mm: Option<f64>,
    #[arg(long)]
    bend_scale: Option<f64>,
    /// Probability of a self-crossing loop.
    #[arg(long)]
    loop_bias: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    stroke_px: Option<f64>,
    /// Perturb the rendering cameras with this seed (calibration error).
    #[arg(long)]
    jitter_seed: Option<u64>,
    /// Erase this many pixels of projected arc from one view.
    #[arg(long)]
    occlude_px: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    occlude_view: u8,
    /// Start of the erased window as a fraction of the projected length.
    #[arg(long, default_value_t = 0.5)]
    occlude_at: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set gctt.lambda_d=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    input_mode: Option<InputMode>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    refine_vertical: bool,
    #[arg(long)]
    symmetric_distance: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Scene directory (defaults to `paths.scene_dir` of the config).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory (defaults to `paths.out_dir` of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory with `ordered_view{1,2}.csv` for ordered-points mode.
    #[arg(long)]
    ordered_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report path (defaults to `metrics.json` beside the reconstruction).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth samples per reconstructed point.
    #[arg(long, default_value_t = continuum_core::metrics::DEFAULT_RESAMPLE_FACTOR)]
    resample_factor: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    n_seeds: u64,
    #[arg(long, default_value = "orthogonal")]
    preset: String,
    /// Directory for `bench.csv`, `bench_seeds.csv` and `bench.md`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    loop_bias: Option<f64>,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Input(anyhow::Error),
    Pipeline(PipelineError),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.stage.is_input() {
            Failure::Input(anyhow!(e.to_string()))
        } else {
            Failure::Pipeline(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let mut spec = SceneSpec {
        preset: a.preset.parse::<RigPreset>().map_err(anyhow::Error::new)?,
        jitter_seed: a.jitter_seed,
        ..Default::default()
    };
    spec.curve.seed = a.seed;
    if let Some(v) = a.n_control {
        spec.curve.n_control = v;
    }
    if let Some(v) = a.length_mm {
        spec.curve.length_mm = v;
    }
    if let Some(v) = a.bend_scale {
        spec.curve.bend_scale = v;
    }
    if let Some(v) = a.loop_bias {
        spec.curve.loop_bias = v;
    }
    if let Some(v) = a.n_samples {
        spec.curve.n_samples = v;
    }
    if let Some(v) = a.stroke_px {
        spec.stroke_px = v;
    }
    let mut bundle = generate_scene(&spec).map_err(anyhow::Error::new)?;
    if let Some(px) = a.occlude_px {
        bundle = inject_occlusion(&bundle, a.occlude_view, a.occlude_at, px).map_err(anyhow::Error::new)?;
    }
    save_scene(&bundle, &a.out).map_err(anyhow::Error::new)?;
    println!("{}", a.out.join("manifest.json").display());
    Ok(())
}

/// Sets `path` (dot separated) in a JSON object, creating objects on the way.
fn set_key(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("empty segment in key `{path}`");
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("key `{path}` descends into a non-object"))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn parse_override(spec: &str) -> anyhow::Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not KEY=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn build_config(a: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let mut root = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str::<Value>(&text)
                .with_context(|| format!("config {} is not valid JSON", path.display()))?
        }
        None => Value::Object(Default::default()),
    };
    let mut overrides: Vec<(String, Value)> =
        a.overrides.iter().map(|s| parse_override(s)).collect::<anyhow::Result<_>>()?;
    if let Some(m) = a.input_mode {
        overrides.push(("input_mode".into(), serde_json::to_value(m).expect("enum serializes")));
    }
    for (key, v) in [("gctt.lambda_a", a.lambda_a), ("gctt.lambda_d", a.lambda_d), ("gctt.r_max", a.r_max)] {
        if let Some(v) = v {
            overrides.push((key.into(), Value::from(v)));
        }
    }
    if a.refine_vertical {
        overrides.push(("ecdp.refine_vertical".into(), Value::Bool(true)));
    }
    if a.symmetric_distance {
        overrides.push(("ecdp.symmetric_distance".into(), Value::Bool(true)));
    }
    for (key, v) in overrides {
        set_key(&mut root, &key, v)?;
    }
    let cfg = PipelineConfig::from_json(&root.to_string()).map_err(|e| match &a.config {
        Some(path) => anyhow!("config {}: {}", path.display(), e),
        None => anyhow!("{e}"),
    })?;
    Ok(cfg)
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<(), Failure> {
    let mut cfg = build_config(&a.config)?;
    if let Some(dir) = a.ordered_dir {
        cfg.paths.ordered_dir = Some(dir);
    }
    let scene = a
        .scene
        .or_else(|| cfg.paths.scene_dir.clone())
        .ok_or_else(|| anyhow!("no scene directory (use --scene or paths.scene_dir)"))?;
    let out = a
        .out
        .or_else(|| cfg.paths.out_dir.clone())
        .ok_or_else(|| anyhow!("no output directory (use --out or paths.out_dir)"))?;
    let rec = reconstruct_dir(&scene, &out, &cfg)?;
    println!("{} points -> {}", rec.curve.len(), out.join("curve3d.csv").display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if a.resample_factor == 0 {
        return Err(anyhow!("--resample-factor must be positive").into());
    }
    let recon: Curve3DF64 = read_curve(&a.recon).map_err(anyhow::Error::new)?;
    let gt: Curve3DF64 = read_curve(&a.gt).map_err(anyhow::Error::new)?;
    let m = evaluate(&recon, &gt, Some(a.resample_factor * recon.len()))
        .with_context(|| format!("{} vs {}", a.recon.display(), a.gt.display()))?;
    let json = m.to_json("mm");
    let out = a.out.unwrap_or_else(|| sibling(&a.recon, "metrics.json"));
    fs::write(&out, format!("{json}\n")).with_context(|| format!("cannot write {}", out.display()))?;
    println!("{json}");
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    if a.n_seeds == 0 {
        return Err(anyhow!("--n-seeds must be at least 1").into());
    }
    let config = build_config(&a.config)?;
    let mut scene = SceneSpec {
        preset: a.preset.parse::<RigPreset>().map_err(anyhow::Error::new)?,
        ..Default::default()
    };
    if let Some(v) = a.loop_bias {
        scene.curve.loop_bias = v;
    }
    let spec = BenchSpec {
        n_seeds: a.n_seeds,
        scene,
        config,
        threads: a.threads,
        ..Default::default()
    };
    let report = run_bench(&spec);
    let md = report.to_markdown();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, text) in [
            ("bench.csv", report.to_csv()),
            ("bench_seeds.csv", report.seeds_csv()),
            ("bench.md", md.clone()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    print!("{md}");
    let violations: usize = report.summaries.iter().map(|s| s.contract_violations).sum();
    if violations > 0 {
        log::warn!("{violations} refinement-contract violations");
    }
    Ok(())
}
