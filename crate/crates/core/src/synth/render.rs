use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SceneBundle, SynthError};
use crate::camera::{Camera, PixelPoint, StereoRig};
use crate::centerline::GridPoint;
use crate::ecdp::Curve3D;
use crate::gctt::OrderedSequence;
use crate::mask::BinaryMask;

/// Largest spacing between consecutive projected samples, pixels.
const SUPERSAMPLE_PX: f64 = 0.25;

/// Projected curve sample carrying its 3D arc-length parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSample {
    pub p: PixelPoint<f64>,
    pub s: f64,
}

/// Projects the curve into `cam`, inserting interpolated samples so that
/// consecutive samples are at most a quarter pixel apart. Fails on the first
/// curve sample that lies outside the image or behind the camera.
pub fn project_polyline(
    curve: &Curve3D<f64>,
    arc: &[f64],
    cam: &Camera<f64>,
    view: u8,
) -> Result<Vec<ProjectedSample>, SynthError> {
    let mut proj = Vec::with_capacity(curve.len());
    for (index, x) in curve.points.iter().enumerate() {
        let p = cam
            .project(x)
            .map_err(|_| SynthError::OutOfFrame { view, index })?;
        if !cam.contains(&p) {
            return Err(SynthError::OutOfFrame { view, index });
        }
        proj.push(p);
    }
    let mut out = Vec::with_capacity(proj.len() * 2);
    for k in 0..proj.len() {
        if k > 0 {
            let (a, b) = (proj[k - 1], proj[k]);
            let pieces = (a.dist(&b) / SUPERSAMPLE_PX).ceil().max(1.0) as usize;
            for m in 1..pieces {
                let t = m as f64 / pieces as f64;
                out.push(ProjectedSample {
                    p: a.lerp(&b, t),
                    s: arc[k - 1] + (arc[k] - arc[k - 1]) * t,
                });
            }
        }
        out.push(ProjectedSample {
            p: proj[k],
            s: arc[k],
        });
    }
    Ok(out)
}

fn grid(p: &PixelPoint<f64>) -> GridPoint {
    GridPoint::new(p.u.round() as i32, p.v.round() as i32)
}

/// Ground-truth pixel order of a projected curve: the rounded samples as an
/// 8-connected walk with staircase corners removed, then de-duplicated
/// keeping the first visit (a pixel shared by two passes of a crossing
/// belongs to the earlier one). Each pixel carries the arc length of the
/// sample that first produced it.
pub(crate) fn pixel_walk(samples: &[ProjectedSample]) -> (Vec<GridPoint>, Vec<f64>) {
    let mut walk: Vec<(GridPoint, f64)> = Vec::new();
    for smp in samples {
        let g = grid(&smp.p);
        if walk.last().is_some_and(|(l, _)| *l == g) {
            continue;
        }
        if walk.len() >= 2 && walk[walk.len() - 2].0 == g {
            walk.pop();
            continue;
        }
        walk.push((g, smp.s));
        while walk.len() >= 3 && walk[walk.len() - 3].0.is_neighbor(&walk[walk.len() - 1].0) {
            let last = walk.pop().expect("len >= 3");
            walk.pop();
            walk.push(last);
        }
    }
    let mut seen = std::collections::HashSet::new();
    walk.retain(|(g, _)| seen.insert(*g));
    walk.into_iter().unzip()
}

fn stamp(mask: &mut BinaryMask, c: &PixelPoint<f64>, r: f64) {
    let ri = r.ceil() as i64 + 1;
    let (cx, cy) = (c.u.round() as i64, c.v.round() as i64);
    for y in cy - ri..=cy + ri {
        for x in cx - ri..=cx + ri {
            if x < 0 || y < 0 || x as usize >= mask.width() || y as usize >= mask.height() {
                continue;
            }
            let d2 = (x as f64 - c.u).powi(2) + (y as f64 - c.v).powi(2);
            if d2 <= r * r {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
}

fn rasterize(samples: &[ProjectedSample], walk: &[GridPoint], cam: &Camera<f64>, r: f64) -> BinaryMask {
    let mut m = BinaryMask::new(cam.width, cam.height);
    if r <= 0.0 {
        for g in walk {
            m.set(g.u as usize, g.v as usize, true);
        }
    } else {
        for smp in samples {
            stamp(&mut m, &smp.p, r);
        }
    }
    m
}

/// Renders both views of `curve` with a disk brush of radius `stroke_px`
/// (0 gives the one-pixel ground-truth walk itself).
pub fn render_views(
    curve: &Curve3D<f64>,
    arc: &[f64],
    rig: &StereoRig<f64>,
    stroke_px: f64,
) -> Result<SceneBundle, SynthError> {
    let mut masks = Vec::with_capacity(2);
    let mut ordered = Vec::with_capacity(2);
    let mut ordered_arc = Vec::with_capacity(2);
    for view in 1..=2u8 {
        let cam = rig.camera(view as usize);
        let samples = project_polyline(curve, arc, cam, view)?;
        let (walk, walk_arc) = pixel_walk(&samples);
        masks.push(rasterize(&samples, &walk, cam, stroke_px));
        ordered.push(OrderedSequence::new(
            view,
            walk.iter().map(|g| g.to_pixel()).collect(),
        ));
        ordered_arc.push(walk_arc);
    }
    let [m1, m2]: [BinaryMask; 2] = masks.try_into().expect("two views");
    let [o1, o2]: [OrderedSequence<f64>; 2] = ordered.try_into().expect("two views");
    let [a1, a2]: [Vec<f64>; 2] = ordered_arc.try_into().expect("two views");
    Ok(SceneBundle {
        curve: curve.clone(),
        arc: arc.to_vec(),
        rig: *rig,
        render_rig: *rig,
        masks: [m1, m2],
        ordered: [o1, o2],
        ordered_arc: [a1, a2],
        stroke_px,
        spec: None,
    })
}

/// Number of proper crossings between non-adjacent segments of a polyline.
pub fn count_self_crossings(pts: &[PixelPoint<f64>]) -> usize {
    let cross = |o: &PixelPoint<f64>, a: &PixelPoint<f64>, b: &PixelPoint<f64>| {
        (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
    };
    let n = pts.len();
    let mut count = 0;
    for i in 0..n.saturating_sub(1) {
        let (a, b) = (&pts[i], &pts[i + 1]);
        for j in i + 3..n.saturating_sub(1) {
            let (c, d) = (&pts[j], &pts[j + 1]);
            let d1 = cross(a, b, c);
            let d2 = cross(a, b, d);
            let d3 = cross(c, d, a);
            let d4 = cross(c, d, b);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// Projected polyline thinned to roughly one vertex per pixel, for crossing
/// counts.
pub(crate) fn coarse_projection(samples: &[ProjectedSample]) -> Vec<PixelPoint<f64>> {
    let mut out: Vec<PixelPoint<f64>> = Vec::new();
    for smp in samples {
        if out.last().is_none_or(|l| l.dist(&smp.p) >= 1.0) {
            out.push(smp.p);
        }
    }
    if let Some(last) = samples.last() {
        if out.last() != Some(&last.p) {
            out.push(last.p);
        }
    }
    out
}

/// Smooth segmentation-error model: the stroke radius and the stroke's
/// lateral position drift along the curve as sums of random sinusoids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskNoise {
    pub seed: u64,
    /// Largest change of the stroke radius, pixels.
    pub width_px: f64,
    /// Largest lateral displacement of the stroke, pixels.
    pub offset_px: f64,
    /// Shortest wavelength of the drift along the projected curve, pixels.
    pub wavelength_px: f64,
}

impl Default for MaskNoise {
    fn default() -> Self {
        Self {
            seed: 0,
            width_px: 0.8,
            offset_px: 0.7,
            wavelength_px: 30.0,
        }
    }
}

struct Drift {
    terms: Vec<(f64, f64, f64)>,
}

impl Drift {
    fn new(rng: &mut ChaCha8Rng, shortest: f64) -> Self {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.2..1.0),
                    std::f64::consts::TAU / rng.random_range(shortest..4.0 * shortest),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let norm: f64 = terms.iter().map(|t| t.0).sum();
        Self {
            terms: terms.into_iter().map(|(a, w, p)| (a / norm, w, p)).collect(),
        }
    }

    /// Value in [-1, 1] at arc length `l`.
    fn at(&self, l: f64) -> f64 {
        self.terms.iter().map(|(a, w, p)| a * (w * l + p).sin()).sum()
    }
}

/// Re-renders one view with [`MaskNoise`] applied, emulating an imperfect
/// segmentation of the same curve.
pub fn perturb_mask(
    bundle: &SceneBundle,
    view: u8,
    noise: &MaskNoise,
) -> Result<BinaryMask, SynthError> {
    let cam = bundle.render_rig.camera(view as usize);
    let samples = project_polyline(&bundle.curve, &bundle.arc, cam, view)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed.wrapping_mul(31).wrapping_add(view as u64));
    let width = Drift::new(&mut rng, noise.wavelength_px);
    let offset = Drift::new(&mut rng, noise.wavelength_px);
    let mut mask = BinaryMask::new(cam.width, cam.height);
    let mut l = 0.0;
    let n = samples.len();
    for k in 0..n {
        if k > 0 {
            l += samples[k].p.dist(&samples[k - 1].p);
        }
        let a = samples[k.saturating_sub(1)].p;
        let b = samples[(k + 1).min(n - 1)].p;
        let (tx, ty) = (b.u - a.u, b.v - a.v);
        let tn = (tx * tx + ty * ty).sqrt().max(1e-12);
        let (nx, ny) = (-ty / tn, tx / tn);
        let off = noise.offset_px * offset.at(l);
        let c = PixelPoint::new(samples[k].p.u + nx * off, samples[k].p.v + ny * off);
        let r = (bundle.stroke_px + noise.width_px * width.at(l)).max(0.5);
        stamp(&mut mask, &c, r);
    }
    Ok(mask)
}

type GapWindow = (Vec<ProjectedSample>, Vec<f64>, f64, f64);

/// Projected samples of one view, their cumulative image arc length, and
/// the image-arc window `[start, end]` of a gap.
fn gap_window(
    bundle: &SceneBundle,
    view: u8,
    gap_start_frac: f64,
    gap_len_px: f64,
) -> Result<GapWindow, SynthError> {
    let cam = bundle.render_rig.camera(view as usize);
    let samples = project_polyline(&bundle.curve, &bundle.arc, cam, view)?;
    let mut cum = vec![0.0; samples.len()];
    for k in 1..samples.len() {
        cum[k] = cum[k - 1] + samples[k].p.dist(&samples[k - 1].p);
    }
    let total = *cum.last().unwrap_or(&0.0);
    let start = (gap_start_frac.clamp(0.0, 1.0) * total).min((total - gap_len_px).max(0.0));
    Ok((samples, cum, start, start + gap_len_px.max(0.0)))
}

/// Range of 3D arc length (mm) hidden by [`inject_occlusion`] with the same
/// arguments.
pub fn occlusion_arc_range(
    bundle: &SceneBundle,
    view: u8,
    gap_start_frac: f64,
    gap_len_px: f64,
) -> Result<(f64, f64), SynthError> {
    let (samples, cum, start, end) = gap_window(bundle, view, gap_start_frac, gap_len_px)?;
    let arcs: Vec<f64> = (0..samples.len())
        .filter(|&k| cum[k] >= start && cum[k] <= end)
        .map(|k| samples[k].s)
        .collect();
    let lo = arcs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = arcs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if lo <= hi { (lo, hi) } else { (0.0, 0.0) })
}

/// Erases the stroke over a window of `gap_len_px` pixels of projected arc
/// length in one view, starting at `gap_start_frac` of the projected
/// length. Only pixels whose closest curve sample falls inside the window
/// are removed, so other passes of the curve stay intact. Ground truth is
/// left untouched.
pub fn inject_occlusion(
    bundle: &SceneBundle,
    view: u8,
    gap_start_frac: f64,
    gap_len_px: f64,
) -> Result<SceneBundle, SynthError> {
    let mut out = bundle.clone();
    if gap_len_px <= 0.0 {
        return Ok(out);
    }
    let vi = (view as usize).clamp(1, 2) - 1;
    let (samples, cum, start, end) = gap_window(bundle, view, gap_start_frac, gap_len_px)?;
    let inside = |k: usize| cum[k] >= start && cum[k] <= end;

    let mask = &mut out.masks[vi];
    let before = mask.count();
    let reach = bundle.stroke_px + 1.5;
    let r = reach.ceil() as i64;
    let mut erase = Vec::new();
    for k in (0..samples.len()).filter(|&k| inside(k)) {
        let c = samples[k].p;
        let (cx, cy) = (c.u.round() as i64, c.v.round() as i64);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                if !mask.get_signed(x, y) {
                    continue;
                }
                let q = PixelPoint::new(x as f64, y as f64);
                let nearest = samples
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.p.dist(&q).total_cmp(&b.1.p.dist(&q)))
                    .map(|(i, _)| i)
                    .expect("non-empty");
                if inside(nearest) && samples[nearest].p.dist(&q) <= reach {
                    erase.push((x as usize, y as usize));
                }
            }
        }
    }
    erase.sort_unstable();
    erase.dedup();
    let fraction = erase.len() as f64 / before.max(1) as f64;
    if fraction >= 0.3 {
        return Err(SynthError::GapTooLarge {
            fraction: 100.0 * fraction,
        });
    }
    for (x, y) in erase {
        mask.set(x, y, false);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::WorldPoint;
    use crate::centerline::extract_centerline;
    use crate::skeleton::{has_full_2x2, skeletonize};
    use crate::synth::{gen_curve, make_rig, CurveSpec, RigPreset};

    fn straight() -> (Curve3D<f64>, Vec<f64>) {
        gen_curve(&CurveSpec {
            bend_scale: 0.0,
            seed: 1,
            length_mm: 120.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn walk_is_eight_connected_without_corners() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let (c, arc) = gen_curve(&CurveSpec { seed: 4, ..Default::default() }).unwrap();
        let smp = project_polyline(&c, &arc, rig.cam1(), 1).unwrap();
        let (walk, warc) = pixel_walk(&smp);
        for w in walk.windows(2) {
            assert!(w[0].is_neighbor(&w[1]), "{w:?}");
        }
        for w in walk.windows(3) {
            assert!(!w[0].is_neighbor(&w[2]));
        }
        assert!(warc.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn straight_segment_renders_bar_with_two_endpoints() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let (c, arc) = straight();
        let b = render_views(&c, &arc, &rig, 2.0).unwrap();
        for m in &b.masks {
            let cl = extract_centerline(&skeletonize(m)).unwrap();
            assert_eq!(cl.endpoints().len(), 2);
        }
    }

    #[test]
    fn zero_stroke_mask_is_its_own_skeleton() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let (c, arc) = gen_curve(&CurveSpec { seed: 2, ..Default::default() }).unwrap();
        let b = render_views(&c, &arc, &rig, 0.0).unwrap();
        for (m, o) in b.masks.iter().zip(&b.ordered) {
            assert!(!has_full_2x2(m));
            assert_eq!(m.count(), o.len());
            if count_self_crossings(&o.points) == 0 {
                assert_eq!(&skeletonize(m), m);
            }
        }
    }

    #[test]
    fn mask_pixels_lie_within_stroke() {
        let rig = make_rig(RigPreset::CArm30, None).unwrap();
        let (c, arc) = gen_curve(&CurveSpec { seed: 9, ..Default::default() }).unwrap();
        let b = render_views(&c, &arc, &rig, 2.0).unwrap();
        let smp = project_polyline(&c, &arc, rig.cam1(), 1).unwrap();
        for (x, y) in b.masks[0].foreground() {
            let q = PixelPoint::new(x as f64, y as f64);
            let d = smp.iter().map(|s| s.p.dist(&q)).fold(f64::INFINITY, f64::min);
            assert!(d <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn out_of_frame_reports_index() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let c = Curve3D::from_points(vec![
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(0.0, 400.0, 0.0),
        ]);
        assert!(matches!(
            render_views(&c, &[0.0, 400.0], &rig, 2.0),
            Err(SynthError::OutOfFrame { view: 1, index: 1 })
        ));
    }

    #[test]
    fn crossings_of_simple_shapes() {
        let px = |u: f64, v: f64| PixelPoint::new(u, v);
        let loop_ = [px(0., 0.), px(4., 4.), px(8., 8.), px(8., 4.), px(8., 0.), px(4., 8.)];
        assert_eq!(count_self_crossings(&loop_), 1);
        let zigzag = [px(0., 0.), px(1., 1.), px(2., 0.), px(3., 1.), px(4., 0.)];
        assert_eq!(count_self_crossings(&zigzag), 0);
    }

    #[test]
    fn occlusion_gap_adds_two_endpoints() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let (c, arc) = straight();
        let b = render_views(&c, &arc, &rig, 2.0).unwrap();
        let same = inject_occlusion(&b, 1, 0.5, 0.0).unwrap();
        assert_eq!(same.masks, b.masks);

        let g = inject_occlusion(&b, 1, 0.5, 10.0).unwrap();
        assert_eq!(g.masks[1], b.masks[1]);
        let skel = skeletonize(&g.masks[0]);
        let ends: usize = {
            let (labels, sizes) = skel.components();
            assert_eq!(sizes.len(), 2);
            let _ = labels;
            crate::centerline::Centerline::from_points(
                512,
                512,
                &skel
                    .foreground()
                    .map(|(x, y)| GridPoint::new(x as i32, y as i32))
                    .collect::<Vec<_>>(),
            )
            .endpoints()
            .len()
        };
        assert_eq!(ends, 4);

        assert!(matches!(
            inject_occlusion(&b, 1, 0.2, 0.4 * 300.0),
            Err(SynthError::GapTooLarge { .. })
        ));
    }

    #[test]
    fn noisy_mask_is_deterministic_and_close() {
        let rig = make_rig(RigPreset::Orthogonal, None).unwrap();
        let (c, arc) = gen_curve(&CurveSpec { seed: 5, ..Default::default() }).unwrap();
        let b = render_views(&c, &arc, &rig, 2.0).unwrap();
        let noise = MaskNoise { seed: 3, ..Default::default() };
        let a = perturb_mask(&b, 1, &noise).unwrap();
        assert_eq!(a, perturb_mask(&b, 1, &noise).unwrap());
        assert_ne!(a, b.masks[0]);
        assert_eq!(a.components().1.len(), 1);
    }
}
