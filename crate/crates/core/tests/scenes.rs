use nalgebra::Vector3;

use continuum_core::camera::{Camera, Intrinsics, PixelPoint, Pose, StereoRig, WorldPoint};
use continuum_core::centerline::extract_centerline;
use continuum_core::ecdp::{naive_intersection_baseline, Curve3D, MatchKind};
use continuum_core::gctt::OrderedSequence;
use continuum_core::metrics::evaluate;
use continuum_core::pipeline::{run, PipelineConfig, SceneInput};
use continuum_core::skeleton::skeletonize;
use continuum_core::synth::{
    count_self_crossings, gen_curve, generate_scene, make_rig, render_views, resample_uniform, CurveSpec,
    RigPreset, SceneBundle, SceneSpec,
};

fn scene(seed: u64, loop_bias: f64) -> SceneBundle {
    generate_scene(&SceneSpec {
        curve: CurveSpec {
            seed,
            loop_bias,
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap()
}

fn bundle_from(pts: &[Vector3<f64>], rig: &StereoRig<f64>) -> SceneBundle {
    let mut arc = vec![0.0];
    for w in pts.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let curve = Curve3D::from_points(pts.iter().map(WorldPoint::from_vector).collect());
    render_views(&curve, &arc, rig, 2.0).unwrap()
}

/// 300 mm baseline, both cameras about 500 mm from the origin.
fn short_baseline_rig() -> StereoRig<f64> {
    let k = Intrinsics::new(1000.0, 1000.0, 256.0, 256.0, 0.0).unwrap();
    let down = Vector3::new(0.0, 1.0, 0.0);
    let z = -(500.0f64.powi(2) - 150.0f64.powi(2)).sqrt();
    let cam = |x: f64| {
        Camera::new(
            k,
            Pose::look_at(Vector3::new(x, 0.0, z), Vector3::zeros(), down).unwrap(),
            512,
            512,
        )
    };
    StereoRig::new(cam(-150.0), cam(150.0)).unwrap()
}

#[test]
fn helix_from_exact_projections_is_sub_tenth_millimetre() {
    let rig = short_baseline_rig();
    assert!((rig.baseline() - 300.0).abs() < 1e-9);
    let helix = |t: f64| WorldPoint::new(25.0 * t.cos(), -60.0 + 120.0 * t / 12.0, 25.0 * t.sin());
    let project = |view: usize, n: usize| {
        let cam = rig.camera(view);
        let pts = (0..n)
            .map(|k| cam.project(&helix(12.0 * k as f64 / (n - 1) as f64)).unwrap())
            .collect();
        OrderedSequence::new(view as u8, pts)
    };
    let input = SceneInput::Ordered([project(1, 2400), project(2, 2000)]);
    let rec = run(&rig, input, &PipelineConfig::default()).unwrap();
    let gt = Curve3D::from_points((0..20000).map(|k| helix(12.0 * k as f64 / 19999.0)).collect());
    let m = evaluate(&rec.curve, &gt, None).unwrap();
    assert_eq!(rec.curve.len(), 2000);
    assert!(m.overall < 0.1, "{m:?}");
}

#[test]
fn ordered_ground_truth_reprojects_within_three_quarters_of_a_pixel() {
    for seed in 0..5 {
        let b = scene(seed, 0.0);
        let rec = run(&b.rig, SceneInput::Ordered(b.ordered.clone()), &PipelineConfig::default()).unwrap();
        let worst = rec
            .curve
            .residuals
            .iter()
            .map(|&(a, b)| a.max(b))
            .fold(0.0, f64::max);
        assert!(worst < 0.75, "seed {seed}: residual {worst}");
    }
}

#[test]
fn refined_view1_positions_advance_along_the_sequence() {
    for seed in 0..5 {
        let b = scene(seed, 0.0);
        let rec = run(&b.rig, SceneInput::Masks(b.masks.clone()), &PipelineConfig::default()).unwrap();
        let param: Vec<f64> = rec
            .correspondences
            .pairs
            .iter()
            .map(|p| p.anchors.0 as f64 + p.t * (p.anchors.1 as f64 - p.anchors.0 as f64))
            .collect();
        for w in param.windows(2) {
            assert!(w[1] >= w[0] - 1.0, "seed {seed}: {} after {}", w[1], w[0]);
        }
    }
}

#[test]
fn deleted_view1_points_are_interpolated_near_the_truth() {
    let cfg = PipelineConfig::default();
    for seed in 0..10 {
        let b = scene(seed, 0.0);
        let full = &b.ordered[0];
        let start = full.len() / 2 - 4;
        let deleted: Vec<PixelPoint<f64>> = full.points[start..start + 8].to_vec();
        let mut kept = full.points.clone();
        kept.drain(start..start + 8);
        let s1 = OrderedSequence::new(1, kept);
        let rec = run(&b.rig, SceneInput::Ordered([s1, b.ordered[1].clone()]), &cfg).unwrap();
        let across: Vec<_> = rec
            .correspondences
            .pairs
            .iter()
            .filter(|p| p.kind == MatchKind::Interpolated && p.anchors == (start - 1, start))
            .collect();
        for p in &across {
            let d = deleted.iter().map(|q| q.dist(&p.view1)).fold(f64::INFINITY, f64::min);
            assert!(d <= 1.5, "seed {seed}: gap point {:?} is {d:.2} px from the deleted pixels", p.view1);
        }
    }
}

/// Planar parabola whose view-1 projection turns back at its apex, where
/// it is tangent to the epipolar lines.
fn apex_fixture() -> (SceneBundle, Vec<bool>) {
    let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
    let raw: Vec<Vector3<f64>> = (0..2000)
        .map(|i| {
            let t = -60.0 + 120.0 * i as f64 / 1999.0;
            Vector3::new(t, 20.0 - 0.01 * t * t, 0.3 * t)
        })
        .collect();
    let pts = resample_uniform(&raw, 2000);
    // tangent where the projected direction is within 10 degrees of horizontal
    let cam = rig.cam1();
    let tangent = (0..pts.len())
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(pts.len() - 1));
            let pa = cam.project(&WorldPoint::from_vector(&pts[a])).unwrap();
            let pb = cam.project(&WorldPoint::from_vector(&pts[b])).unwrap();
            (pb.v - pa.v).atan2(pb.u - pa.u).sin().abs() < 10f64.to_radians().sin()
        })
        .collect();
    (bundle_from(&pts, &rig), tangent)
}

fn region_max_errors(rec: &Curve3D<f64>, b: &SceneBundle, tangent: &[bool]) -> (f64, f64) {
    let (mut inside, mut outside) = (0.0f64, 0.0f64);
    for p in &rec.points {
        let (k, d) = b
            .curve
            .points
            .iter()
            .enumerate()
            .map(|(k, g)| (k, g.dist(p)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if tangent[k] {
            inside = inside.max(d);
        } else {
            outside = outside.max(d);
        }
    }
    (inside, outside)
}

#[test]
fn tangent_region_error_stays_within_five_times_the_rest() {
    let (b, tangent) = apex_fixture();
    let share = tangent.iter().filter(|&&t| t).count() as f64 / tangent.len() as f64;
    assert!(share > 0.05, "fixture has only {:.1}% tangent samples", 100.0 * share);
    let rec = run(&b.rig, SceneInput::Ordered(b.ordered.clone()), &PipelineConfig::default()).unwrap();
    assert_eq!(rec.curve.len(), b.ordered[1].len());
    let (inside, outside) = region_max_errors(&rec.curve, &b, &tangent);
    assert!(inside > 0.0 && inside <= 5.0 * outside, "tangent {inside:.3} mm vs rest {outside:.3} mm");

    let naive = naive_intersection_baseline(&b.ordered[0], &b.ordered[1], &b.rig).unwrap();
    let e = evaluate(&rec.curve, &b.curve, None).unwrap();
    let n = evaluate(&naive, &b.curve, None).unwrap();
    assert!(n.max_error > e.max_error, "baseline {n:?} vs ECDP {e:?}");
}

#[test]
fn baseline_skips_points_inside_an_epipolar_plane() {
    let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
    let ctrl: Vec<Vector3<f64>> = [
        (-40.0, -70.0, 10.0),
        (-36.0, -45.0, 2.0),
        (-30.0, -20.0, -6.0),
        (-24.0, 0.0, -6.0),
        (-16.0, 0.0, -2.0),
        (-8.0, 0.0, 4.0),
        (0.0, 0.0, 8.0),
        (8.0, 0.0, 6.0),
        (16.0, 0.0, 0.0),
        (24.0, 20.0, -4.0),
        (30.0, 45.0, -2.0),
        (35.0, 70.0, 5.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z))
    .collect();
    let b = bundle_from(&resample_uniform(&continuum_core::synth::catmull_rom(&ctrl, 64), 2000), &rig);
    let rec = run(&b.rig, SceneInput::Ordered(b.ordered.clone()), &PipelineConfig::default()).unwrap();
    let naive = naive_intersection_baseline(&b.ordered[0], &b.ordered[1], &b.rig).unwrap();
    assert_eq!(rec.curve.len(), b.ordered[1].len());
    assert!(naive.len() < rec.curve.len(), "{} vs {}", naive.len(), rec.curve.len());
}

#[test]
fn baseline_agrees_with_ecdp_on_a_transversal_arc() {
    let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
    let pts: Vec<Vector3<f64>> = (0..2000)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / 1999.0;
            Vector3::new(15.0 * (1.0 - t * t), 60.0 * t, -15.0 * (1.0 - t * t))
        })
        .collect();
    let b = bundle_from(&resample_uniform(&pts, 2000), &rig);
    let rec = run(&b.rig, SceneInput::Ordered(b.ordered.clone()), &PipelineConfig::default()).unwrap();
    let naive = naive_intersection_baseline(&b.ordered[0], &b.ordered[1], &b.rig).unwrap();
    assert_eq!(naive.len(), rec.curve.len());
    for (k, (x, pair)) in naive.points.iter().zip(&rec.correspondences.pairs).enumerate() {
        let p = rig.cam1().project(x).unwrap();
        let d = p.dist(&pair.view1);
        assert!(d < 0.5, "correspondence {k}: {d:.3} px apart");
    }
}

#[test]
fn baseline_takes_a_wrong_branch_on_a_crossing() {
    let cfg = PipelineConfig::default();
    let mut compared = 0;
    for seed in 0..10 {
        let b = scene(seed, 1.0);
        if b.self_crossings().unwrap()[0] == 0 {
            continue;
        }
        compared += 1;
        let rec = run(&b.rig, SceneInput::Ordered(b.ordered.clone()), &cfg).unwrap();
        let naive = naive_intersection_baseline(&b.ordered[0], &b.ordered[1], &b.rig).unwrap();
        let e = evaluate(&rec.curve, &b.curve, None).unwrap();
        let n = evaluate(&naive, &b.curve, None).unwrap();
        assert!(n.max_error > e.max_error, "seed {seed}: baseline {n:?} vs ECDP {e:?}");
    }
    assert!(compared >= 3);
}

#[test]
fn loop_bias_one_crosses_in_most_scenes() {
    let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
    let crossing = (0..200u64)
        .filter(|&seed| {
            let (curve, _) = gen_curve(&CurveSpec {
                seed,
                loop_bias: 1.0,
                ..Default::default()
            })
            .unwrap();
            (1..=2).any(|v| {
                let cam = rig.camera(v);
                let px: Vec<PixelPoint<f64>> = curve.points.iter().map(|p| cam.project(p).unwrap()).collect();
                count_self_crossings(&px) > 0
            })
        })
        .count();
    assert!(crossing >= 60, "{crossing}/200 scenes cross");
}

#[test]
fn crossing_scene_thins_to_a_junction() {
    let b = scene(0, 1.0);
    assert!(b.self_crossings().unwrap().iter().sum::<usize>() > 0);
    let junctions: usize = b
        .masks
        .iter()
        .map(|m| extract_centerline(&skeletonize(m)).unwrap().junction_count())
        .sum();
    assert!(junctions > 0);
}

#[test]
fn clean_masks_cover_the_ground_truth_pixels() {
    for seed in 0..5 {
        let b = scene(seed, 0.0);
        let rec = run(&b.rig, SceneInput::Masks(b.masks.clone()), &PipelineConfig::default()).unwrap();
        let n_gt = b.ordered[1].len();
        assert!(
            rec.curve.len() as f64 >= 0.95 * n_gt as f64,
            "seed {seed}: {} of {n_gt}",
            rec.curve.len()
        );
    }
}
