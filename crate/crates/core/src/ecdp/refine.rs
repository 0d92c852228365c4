use std::fmt::Write as _;

use super::{CostMatrix, EcdpError, MonotonePath};
use crate::camera::PixelPoint;
use crate::gctt::OrderedSequence;
use crate::scalar::{real, to_f64, Real};

const ZERO_WEIGHT: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    /// One-to-one path step, taken as is.
    Direct,
    /// Inside a horizontal run: view-1 point interpolated between two rows.
    Interpolated,
    /// Vertical run collapsed to its minimum-cost row.
    Collapsed,
}

/// One refined match. `view1` equals `lerp(s1[anchors.0], s1[anchors.1], t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair<T> {
    pub j: usize,
    pub view1: PixelPoint<T>,
    pub view2: PixelPoint<T>,
    pub anchors: (usize, usize),
    pub t: T,
    /// Cost of the path cell this match came from.
    pub cost: T,
    pub kind: MatchKind,
}

/// Additional match produced by the optional view-2 refinement of vertical
/// runs: view-1 row `i` paired with an interpolated view-2 point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraPair<T> {
    pub i: usize,
    pub j: usize,
    pub view1: PixelPoint<T>,
    pub view2: PixelPoint<T>,
    pub anchors: (usize, usize),
    pub t: T,
}

/// Exactly one pair per view-2 index, in view-2 order, plus any extra pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet<T> {
    pub pairs: Vec<CorrespondencePair<T>>,
    pub extra: Vec<ExtraPair<T>>,
}

impl<T: Real> CorrespondenceSet<T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All pixel pairs in curve order: by view-2 index, and within one view-2
    /// index by view-1 row.
    pub fn ordered_pixel_pairs(&self) -> Vec<(PixelPoint<T>, PixelPoint<T>)> {
        let mut keyed: Vec<(usize, usize, PixelPoint<T>, PixelPoint<T>)> = self
            .pairs
            .iter()
            .map(|p| (p.j, p.row(), p.view1, p.view2))
            .collect();
        keyed.extend(self.extra.iter().map(|e| (e.j, e.i, e.view1, e.view2)));
        keyed.sort_by_key(|k| (k.0, k.1));
        keyed.into_iter().map(|k| (k.2, k.3)).collect()
    }

    /// Checks the one-to-one and convexity contracts; returns the number of
    /// violations found together with a description of the first one.
    pub fn contract_violations(
        &self,
        s1: &OrderedSequence<T>,
        n2: usize,
    ) -> (usize, Option<String>) {
        let mut count = 0;
        let mut first = None;
        let mut note = |msg: String| {
            count += 1;
            if first.is_none() {
                first = Some(msg);
            }
        };
        if self.pairs.len() != n2 {
            note(format!("{} pairs for {} view-2 points", self.pairs.len(), n2));
        }
        for (k, p) in self.pairs.iter().enumerate() {
            if p.j != k {
                note(format!("pair {k} has view-2 index {}", p.j));
            }
            let (a, b) = p.anchors;
            if a >= s1.len() || b >= s1.len() {
                note(format!("pair {k} anchors out of range"));
                continue;
            }
            let t = to_f64(p.t);
            if !(0.0..=1.0).contains(&t) {
                note(format!("pair {k} weight {t} outside [0, 1]"));
            }
            if !on_segment(&s1.points[a], &s1.points[b], &p.view1) {
                note(format!("pair {k} not on the segment between its anchors"));
            }
        }
        (count, first)
    }

    /// CSV with header `j,u1,v1,u2,v2,cost`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,u1,v1,u2,v2,cost\n");
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.j,
                to_f64(p.view1.u),
                to_f64(p.view1.v),
                to_f64(p.view2.u),
                to_f64(p.view2.v),
                to_f64(p.cost)
            );
        }
        s
    }
}

impl<T: Real> CorrespondencePair<T> {
    /// View-1 row the match is anchored at.
    pub fn row(&self) -> usize {
        if to_f64(self.t) < 0.5 {
            self.anchors.0
        } else {
            self.anchors.1
        }
    }
}

fn on_segment<T: Real>(a: &PixelPoint<T>, b: &PixelPoint<T>, p: &PixelPoint<T>) -> bool {
    let (ax, ay, bx, by) = (to_f64(a.u), to_f64(a.v), to_f64(b.u), to_f64(b.v));
    let (px, py) = (to_f64(p.u), to_f64(p.v));
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let scale = 1.0 + ax.abs().max(ay.abs()).max(bx.abs()).max(by.abs());
    let tol = 1e-9 * scale;
    if len2 == 0.0 {
        return (px - ax).hypot(py - ay) <= tol;
    }
    let s = ((px - ax) * dx + (py - ay) * dy) / len2;
    let (qx, qy) = (ax + s * dx, ay + s * dy);
    let slack = tol / len2.sqrt();
    (-slack..=1.0 + slack).contains(&s) && (px - qx).hypot(py - qy) <= tol
}

/// Weighted point between anchors `a` and `b`: `(wa * a + wb * b) / (wa + wb)`.
/// Returns the point and the fraction `t` toward `b`; falls back to the
/// midpoint when both weights vanish.
fn blend<T: Real>(a: &PixelPoint<T>, b: &PixelPoint<T>, wa: T, wb: T) -> (PixelPoint<T>, T) {
    let eps = real::<T>(ZERO_WEIGHT);
    let t = if wa < eps && wb < eps {
        real(0.5)
    } else {
        wb / (wa + wb)
    };
    (a.lerp(b, t), t)
}

/// Turns a monotone path into a one-to-one correspondence set.
///
/// * A path step alone in both its row and its column is kept as is.
/// * A horizontal run (row `i*`, columns `j1..=j2`) keeps `s_{i*}` at the
///   column `j*` of minimum cost (first on ties); earlier columns are
///   interpolated between `s_{i*-1}` and `s_{i*}`, later ones between
///   `s_{i*}` and `s_{i*+1}`, each anchor weighted by the other anchor's
///   cost. Missing neighbours at the first/last row are clamped to `s_{i*}`.
/// * A vertical run (rows `i1..=i2`, column `j`) keeps the row of minimum
///   cost. With `refine_vertical` the remaining rows are paired with view-2
///   points interpolated the same way and stored in `extra`.
pub fn refine<T: Real>(
    path: &MonotonePath<T>,
    s1: &OrderedSequence<T>,
    s2: &OrderedSequence<T>,
    d: &CostMatrix<T>,
    refine_vertical: bool,
) -> Result<CorrespondenceSet<T>, EcdpError> {
    let (n1, n2) = (s1.len(), s2.len());
    if n1 == 0 || n2 == 0 {
        return Err(EcdpError::EmptySequence);
    }
    if d.rows() != n1 || d.cols() != n2 || !path.is_valid(n1, n2) {
        return Err(EcdpError::InvalidPath { rows: n1, cols: n2 });
    }

    // column range per row and row range per column
    let mut row_span = vec![(usize::MAX, 0usize); n1];
    let mut col_span = vec![(usize::MAX, 0usize); n2];
    for &(i, j) in &path.steps {
        row_span[i] = (row_span[i].0.min(j), row_span[i].1.max(j));
        col_span[j] = (col_span[j].0.min(i), col_span[j].1.max(i));
    }
    // j* per row: first column of minimum cost within the row's run
    let j_star: Vec<usize> = row_span
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            (lo..=hi).fold(lo, |best, j| if d.get(i, j) < d.get(i, best) { j } else { best })
        })
        .collect();

    let p1 = &s1.points;
    let p2 = &s2.points;
    let mut pairs = Vec::with_capacity(n2);
    let mut extra = Vec::new();
    for j in 0..n2 {
        let (lo, hi) = col_span[j];
        if hi > lo {
            let i_min =
                (lo..=hi).fold(lo, |best, i| if d.get(i, j) < d.get(best, j) { i } else { best });
            pairs.push(CorrespondencePair {
                j,
                view1: p1[i_min],
                view2: p2[j],
                anchors: (i_min, i_min),
                t: T::zero(),
                cost: d.get(i_min, j),
                kind: MatchKind::Collapsed,
            });
            if refine_vertical {
                for i in (lo..=hi).filter(|&i| i != i_min) {
                    extra.push(vertical_extra(d, p1, p2, i, j, i_min));
                }
            }
            continue;
        }
        let i = lo;
        let (jlo, jhi) = row_span[i];
        let js = j_star[i];
        let direct = CorrespondencePair {
            j,
            view1: p1[i],
            view2: p2[j],
            anchors: (i, i),
            t: T::zero(),
            cost: d.get(i, j),
            kind: MatchKind::Direct,
        };
        if jlo == jhi || j == js {
            pairs.push(direct);
        } else if j < js {
            if i == 0 {
                pairs.push(direct);
                continue;
            }
            let (q, t) = blend(&p1[i - 1], &p1[i], d.get(i, j), d.get(i - 1, j));
            pairs.push(CorrespondencePair {
                view1: q,
                anchors: (i - 1, i),
                t,
                kind: MatchKind::Interpolated,
                ..direct
            });
        } else {
            if i + 1 == n1 {
                pairs.push(direct);
                continue;
            }
            let (q, t) = blend(&p1[i], &p1[i + 1], d.get(i + 1, j), d.get(i, j));
            pairs.push(CorrespondencePair {
                view1: q,
                anchors: (i, i + 1),
                t,
                kind: MatchKind::Interpolated,
                ..direct
            });
        }
    }
    Ok(CorrespondenceSet { pairs, extra })
}

fn vertical_extra<T: Real>(
    d: &CostMatrix<T>,
    p1: &[PixelPoint<T>],
    p2: &[PixelPoint<T>],
    i: usize,
    j: usize,
    i_min: usize,
) -> ExtraPair<T> {
    let n2 = p2.len();
    let (view2, anchors, t) = if i < i_min && j > 0 {
        let (q, t) = blend(&p2[j - 1], &p2[j], d.get(i, j), d.get(i, j - 1));
        (q, (j - 1, j), t)
    } else if i > i_min && j + 1 < n2 {
        let (q, t) = blend(&p2[j], &p2[j + 1], d.get(i, j + 1), d.get(i, j));
        (q, (j, j + 1), t)
    } else {
        (p2[j], (j, j), T::zero())
    };
    ExtraPair {
        i,
        j,
        view1: p1[i],
        view2,
        anchors,
        t,
    }
}
