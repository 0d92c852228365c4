//! Unordered skeleton point sets with 8-connectivity degrees and endpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::camera::PixelPoint;
use crate::mask::BinaryMask;
use crate::scalar::{real, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CenterlineError {
    #[error("skeleton has no foreground pixels")]
    EmptySkeleton,
}

/// Integer pixel; ordering is lexicographic in `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub u: i32,
    pub v: i32,
}

impl GridPoint {
    pub fn new(u: i32, v: i32) -> Self {
        Self { u, v }
    }

    pub fn dist2(&self, other: &GridPoint) -> i64 {
        let du = (self.u - other.u) as i64;
        let dv = (self.v - other.v) as i64;
        du * du + dv * dv
    }

    pub fn is_neighbor(&self, other: &GridPoint) -> bool {
        self != other && (self.u - other.u).abs() <= 1 && (self.v - other.v).abs() <= 1
    }

    pub fn to_pixel<T: Real>(self) -> PixelPoint<T> {
        PixelPoint::new(real(self.u as f64), real(self.v as f64))
    }
}

/// Skeleton pixels of the retained component with their 8-neighbour counts.
#[derive(Debug, Clone)]
pub struct Centerline {
    width: usize,
    height: usize,
    points: Vec<GridPoint>,
    degree: Vec<u8>,
    endpoints: Vec<GridPoint>,
    // grid -> index into `points`, u32::MAX where absent
    index: Vec<u32>,
    dropped: usize,
}

const NONE: u32 = u32::MAX;

impl Centerline {
    /// Builds a centerline from an explicit point set (duplicates ignored).
    /// Degrees and endpoints are derived; no component filtering is applied.
    pub fn from_points(width: usize, height: usize, pts: &[GridPoint]) -> Self {
        let mut points: Vec<GridPoint> = pts
            .iter()
            .copied()
            .filter(|p| p.u >= 0 && p.v >= 0 && (p.u as usize) < width && (p.v as usize) < height)
            .collect();
        points.sort_by_key(|p| (p.v, p.u));
        points.dedup();
        let mut index = vec![NONE; width * height];
        for (i, p) in points.iter().enumerate() {
            index[p.v as usize * width + p.u as usize] = i as u32;
        }
        let mut cl = Self {
            width,
            height,
            points,
            degree: Vec::new(),
            endpoints: Vec::new(),
            index,
            dropped: 0,
        };
        cl.degree = cl
            .points
            .iter()
            .map(|p| cl.neighbors(*p).count() as u8)
            .collect();
        cl.endpoints = cl
            .points
            .iter()
            .zip(&cl.degree)
            .filter(|(_, &d)| d == 1)
            .map(|(p, _)| *p)
            .collect();
        cl
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Points in row-major order.
    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn endpoints(&self) -> &[GridPoint] {
        &self.endpoints
    }

    /// Pixels discarded because they belonged to smaller components.
    pub fn dropped_pixels(&self) -> usize {
        self.dropped
    }

    pub fn index_of(&self, p: GridPoint) -> Option<usize> {
        if p.u < 0 || p.v < 0 || p.u as usize >= self.width || p.v as usize >= self.height {
            return None;
        }
        match self.index[p.v as usize * self.width + p.u as usize] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        self.index_of(p).is_some()
    }

    pub fn degree(&self, p: GridPoint) -> Option<u8> {
        self.index_of(p).map(|i| self.degree[i])
    }

    pub fn degree_at(&self, i: usize) -> u8 {
        self.degree[i]
    }

    /// Skeleton neighbours of `p` in ring order starting north.
    pub fn neighbors(&self, p: GridPoint) -> impl Iterator<Item = GridPoint> + '_ {
        const RING: [(i32, i32); 8] = [
            (0, -1),
            (1, -1),
            (1, 0),
            (1, 1),
            (0, 1),
            (-1, 1),
            (-1, 0),
            (-1, -1),
        ];
        RING.iter()
            .map(move |&(du, dv)| GridPoint::new(p.u + du, p.v + dv))
            .filter(move |q| self.contains(*q))
    }

    /// Number of points with degree >= 3.
    pub fn junction_count(&self) -> usize {
        self.degree.iter().filter(|&&d| d >= 3).count()
    }

    /// CSV with header `u,v,degree`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,degree\n");
        for (p, d) in self.points.iter().zip(&self.degree) {
            let _ = writeln!(s, "{},{},{}", p.u, p.v, d);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_csv())
    }
}

/// Extracts the largest 8-connected component of a one-pixel-wide skeleton.
pub fn extract_centerline(skeleton: &BinaryMask) -> Result<Centerline, CenterlineError> {
    extract_centerline_within(skeleton, 0.0, usize::MAX)
}

/// Like [`extract_centerline`], but also keeps every component of at least
/// `min_size` pixels that lies within `reach` pixels of the kept set, so a
/// body split by an occlusion gap survives as one centerline. Components
/// are absorbed repeatedly until none is within reach.
pub fn extract_centerline_within(
    skeleton: &BinaryMask,
    reach: f64,
    min_size: usize,
) -> Result<Centerline, CenterlineError> {
    let (labels, sizes) = skeleton.components();
    if sizes.is_empty() {
        return Err(CenterlineError::EmptySkeleton);
    }
    let w = skeleton.width();
    let mut members: Vec<Vec<GridPoint>> = vec![Vec::new(); sizes.len()];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            members[l as usize - 1].push(GridPoint::new((i % w) as i32, (i / w) as i32));
        }
    }
    // ties go to the component found first in raster order
    let (best, _) = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    let mut kept = vec![false; sizes.len()];
    kept[best] = true;
    let mut pts = members[best].clone();
    let reach2 = reach * reach;
    loop {
        let next = (0..sizes.len()).find(|&c| {
            !kept[c]
                && sizes[c] >= min_size
                && members[c]
                    .iter()
                    .any(|p| pts.iter().any(|q| (p.dist2(q) as f64) <= reach2))
        });
        match next {
            Some(c) => {
                kept[c] = true;
                pts.extend_from_slice(&members[c]);
            }
            None => break,
        }
    }
    let total: usize = sizes.iter().sum();
    let dropped = total - pts.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} skeleton pixels outside the retained component(s)");
    }
    let mut cl = Centerline::from_points(w, skeleton.height(), &pts);
    cl.dropped = dropped;
    Ok(cl)
}
