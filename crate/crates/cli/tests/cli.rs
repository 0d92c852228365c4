use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use continuum_core::pipeline::OUTPUT_FILES;
use continuum_core::synth::SCENE_FILES;
use serde_json::Value;

fn continuum(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_continuum"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, stderr(o));
}

fn synth(dir: &Path, seed: &str, out: &str) {
    ok(&continuum(&["synth", "--seed", seed, "--preset", "orthogonal", "--out", out], dir));
}

fn sorted_listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn metrics(dir: &Path, recon: &str, gt: &str, extra: &[&str]) -> Value {
    let mut args = vec!["eval", "--recon", recon, "--gt", gt];
    args.extend_from_slice(extra);
    let o = continuum(&args, dir);
    ok(&o);
    serde_json::from_str(&stdout(&o)).expect("eval prints JSON")
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn write_line_curve(path: &Path, offset_x: f64) {
    let mut s = String::from("index,x,y,z\n");
    for i in 0..11 {
        s.push_str(&format!("{i},{offset_x},0,{}\n", i as f64));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn synth_writes_the_scene_files_and_prints_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = continuum(&["synth", "--seed", "7", "--preset", "orthogonal", "--out", "scenes/s7"], tmp.path());
    ok(&o);
    assert_eq!(stdout(&o).trim(), Path::new("scenes/s7").join("manifest.json").display().to_string());
    let mut expected: Vec<String> = SCENE_FILES.iter().map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(sorted_listing(&tmp.path().join("scenes/s7")), expected);
    assert_eq!(expected.len(), 7);
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "7", "a");
    synth(tmp.path(), "7", "b");
    for name in SCENE_FILES {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn synth_into_unwritable_path_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("blocker"), "not a directory").unwrap();
    let o = continuum(&["synth", "--seed", "1", "--out", "blocker/scene"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("blocker"), "{}", stderr(&o));
}

#[test]
fn synth_rejects_unknown_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = continuum(&["synth", "--preset", "fisheye", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fisheye"), "{}", stderr(&o));
}

#[test]
fn reconstruct_writes_artifacts_and_covers_the_ordered_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "7", "s");
    let o = continuum(&["reconstruct", "--scene", "s", "--out", "r"], tmp.path());
    ok(&o);
    let listing = sorted_listing(&tmp.path().join("r"));
    for name in OUTPUT_FILES {
        assert!(listing.iter().any(|n| n == name), "missing {name}: {listing:?}");
    }
    for extra in ["skeleton_view1.pgm", "skeleton_view2.pgm", "centerline_view1.csv", "centerline_view2.csv"] {
        assert!(listing.iter().any(|n| n == extra), "missing {extra}");
    }
    let n_recon = csv_rows(&tmp.path().join("r/curve3d.csv"));
    let n_gt = csv_rows(&tmp.path().join("s/gt_order_view2.csv"));
    assert!(
        n_recon as f64 >= 0.95 * n_gt as f64,
        "{n_recon} reconstructed points for {n_gt} ground-truth pixels"
    );
    let timing = fs::read_to_string(tmp.path().join("r/timing.log")).unwrap();
    assert!(timing.starts_with("stage,seconds\n"));
    assert!(timing.contains("correspondence,"), "{timing}");
}

#[test]
fn reconstruct_is_deterministic_apart_from_timing() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3", "s");
    ok(&continuum(&["reconstruct", "--scene", "s", "--out", "a"], tmp.path()));
    ok(&continuum(&["reconstruct", "--scene", "s", "--out", "b"], tmp.path()));
    let names = sorted_listing(&tmp.path().join("a"));
    assert_eq!(names, sorted_listing(&tmp.path().join("b")));
    for name in names.iter().filter(|n| *n != "timing.log") {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn ordered_artifacts_resume_to_the_same_curve() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "5", "s");
    ok(&continuum(&["reconstruct", "--scene", "s", "--out", "full"], tmp.path()));
    ok(&continuum(
        &[
            "reconstruct",
            "--scene",
            "s",
            "--out",
            "resumed",
            "--input-mode",
            "ordered_points",
            "--ordered-dir",
            "full",
        ],
        tmp.path(),
    ));
    let a = fs::read(tmp.path().join("full/curve3d.csv")).unwrap();
    let b = fs::read(tmp.path().join("resumed/curve3d.csv")).unwrap();
    assert!(a == b);
}

#[test]
fn ordered_points_mode_is_no_worse_than_masks() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "7", "s");
    ok(&continuum(&["reconstruct", "--scene", "s", "--out", "m"], tmp.path()));
    ok(&continuum(
        &["reconstruct", "--scene", "s", "--out", "p", "--input-mode", "ordered_points"],
        tmp.path(),
    ));
    let masks = metrics(tmp.path(), "m/curve3d.csv", "s/gt_curve.csv", &[]);
    let points = metrics(tmp.path(), "p/curve3d.csv", "s/gt_curve.csv", &[]);
    assert!(
        points["overall"].as_f64().unwrap() <= masks["overall"].as_f64().unwrap(),
        "ordered {points} vs masks {masks}"
    );
}

#[test]
fn missing_calibration_is_an_input_error_naming_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "2", "s");
    fs::remove_file(tmp.path().join("s/calib.json")).unwrap();
    let o = continuum(&["reconstruct", "--scene", "s", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("calib.json"), "{}", stderr(&o));
}

#[test]
fn output_failure_is_a_pipeline_error_naming_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "2", "s");
    fs::write(tmp.path().join("blocker"), "x").unwrap();
    let o = continuum(&["reconstruct", "--scene", "s", "--out", "blocker/r"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("output stage failed"), "{}", stderr(&o));
}

#[test]
fn empty_mask_fails_in_a_named_stage() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "2", "s");
    fs::write(tmp.path().join("s/view2.pgm"), b"P5\n4 4\n255\n\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
    let o = continuum(&["reconstruct", "--scene", "s", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage failed"), "{}", stderr(&o));
}

#[test]
fn config_file_and_overrides_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "4", "s");
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"input_mode": "ordered_points", "paths": {"scene_dir": "s", "out_dir": "r"}}"#,
    )
    .unwrap();
    ok(&continuum(&["reconstruct", "--config", "cfg.json", "--set", "gctt.lambda_d=0.25"], tmp.path()));
    assert!(tmp.path().join("r/curve3d.csv").exists());
    assert!(!tmp.path().join("r/skeleton_view1.pgm").exists());

    let o = continuum(&["reconstruct", "--config", "cfg.json", "--set", "gctt.r_max=-1"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("config"), "{}", stderr(&o));
    let o = continuum(&["reconstruct", "--config", "missing.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_of_identical_curves_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    write_line_curve(&tmp.path().join("c.csv"), 0.0);
    let m = metrics(tmp.path(), "c.csv", "c.csv", &["--resample-factor", "1"]);
    for key in ["accuracy", "completeness", "overall", "max_error"] {
        assert!(m[key].as_f64().unwrap().abs() < 1e-12, "{key}: {m}");
    }
    assert_eq!(m["units"], "mm");
    let written: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(written, m);
}

#[test]
fn eval_of_a_unit_offset_is_one_millimetre() {
    let tmp = tempfile::tempdir().unwrap();
    write_line_curve(&tmp.path().join("gt.csv"), 0.0);
    write_line_curve(&tmp.path().join("recon.csv"), 1.0);
    let m = metrics(
        tmp.path(),
        "recon.csv",
        "gt.csv",
        &["--resample-factor", "1", "--out", "report.json"],
    );
    for key in ["accuracy", "completeness", "overall", "max_error"] {
        assert!((m[key].as_f64().unwrap() - 1.0).abs() < 1e-6, "{key}: {m}");
    }
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn eval_reports_the_malformed_line() {
    let tmp = tempfile::tempdir().unwrap();
    write_line_curve(&tmp.path().join("gt.csv"), 0.0);
    fs::write(tmp.path().join("bad.csv"), "index,x,y,z\n0,0,0,0\n1,0,zero,1\n").unwrap();
    let o = continuum(&["eval", "--recon", "bad.csv", "--gt", "gt.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

fn bench_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("bench.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn bench_table_has_one_row_per_mode_and_ordered_points_lead() {
    let tmp = tempfile::tempdir().unwrap();
    let o = continuum(&["bench", "--n-seeds", "5", "--preset", "orthogonal", "--out", "b"], tmp.path());
    ok(&o);
    assert!(stdout(&o).contains("| ordered_points |"));
    let rows = bench_rows(&tmp.path().join("b"));
    assert_eq!(rows.len(), 3);
    let overall = |mode: &str| -> f64 {
        rows.iter().find(|r| r[0] == mode).unwrap()[5].parse().unwrap()
    };
    for mode in ["gt_mask", "end_to_end"] {
        assert!(overall("ordered_points") < overall(mode), "{rows:?}");
    }
    for r in &rows {
        assert_eq!(r[2], "0", "failures in {r:?}");
        assert_eq!(r[9], "0", "contract violations in {r:?}");
    }
    assert!(tmp.path().join("b/bench.md").exists());
    assert_eq!(csv_rows(&tmp.path().join("b/bench_seeds.csv")), 15);
}

#[test]
fn single_seed_bench_matches_eval() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&continuum(&["bench", "--n-seeds", "1", "--out", "b"], tmp.path()));
    let rows = bench_rows(&tmp.path().join("b"));
    synth(tmp.path(), "0", "s");
    for (mode, input_mode) in [("gt_mask", "masks"), ("ordered_points", "ordered_points")] {
        let out = format!("r_{mode}");
        ok(&continuum(
            &["reconstruct", "--scene", "s", "--out", &out, "--input-mode", input_mode],
            tmp.path(),
        ));
        let m = metrics(tmp.path(), &format!("{out}/curve3d.csv"), "s/gt_curve.csv", &[]);
        let row = rows.iter().find(|r| r[0] == mode).unwrap();
        for (col, key) in [(3, "accuracy"), (4, "completeness"), (5, "overall"), (6, "max_error")] {
            let bench: f64 = row[col].parse().unwrap();
            assert_eq!(bench, m[key].as_f64().unwrap(), "{mode} {key}");
        }
    }
}

#[test]
fn bench_rejects_zero_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = continuum(&["bench", "--n-seeds", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
