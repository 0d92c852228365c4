//! Plain numeric CSV tables and the curve / sequence file formats built on
//! them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::camera::{PixelPoint, WorldPoint};
use crate::ecdp::Curve3D;
use crate::gctt::OrderedSequence;
use crate::scalar::{real, to_f64, Real};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl CsvError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CsvError::Parse { line, .. } => Some(*line),
            CsvError::Io { .. } => None,
        }
    }
}

/// Parses a header line followed by rows of numbers. The header must start
/// with the `required` columns (extra trailing columns are allowed and
/// returned). Blank lines are skipped; line numbers are 1-based.
pub fn parse_table(
    text: &str,
    required: &[&str],
    path: &Path,
) -> Result<(Vec<String>, Vec<Vec<f64>>), CsvError> {
    let err = |line: usize, msg: String| CsvError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(err(1, "empty file".into()));
    };
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if columns.len() < required.len() || columns.iter().zip(required).any(|(a, b)| a != b) {
        return Err(err(
            hline + 1,
            format!("expected header starting with `{}`", required.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(err(
                k + 1,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(k + 1, format!("`{f}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

pub fn read_table(path: &Path, required: &[&str]) -> Result<Vec<Vec<f64>>, CsvError> {
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text, required, path).map(|(_, rows)| rows)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CsvError> {
    fs::write(path, text).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV with header `index,x,y,z,res1_px,res2_px`.
pub fn curve_to_csv<T: Real>(curve: &Curve3D<T>) -> String {
    let mut s = String::from("index,x,y,z,res1_px,res2_px\n");
    for (i, (p, r)) in curve.points.iter().zip(&curve.residuals).enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            i,
            to_f64(p.x),
            to_f64(p.y),
            to_f64(p.z),
            to_f64(r.0),
            to_f64(r.1)
        );
    }
    s
}

/// Reads a 3D curve. Accepts both the reconstruction layout
/// (`index,x,y,z,...`) and the ground-truth layout (`index,s,x,y,z`).
pub fn read_curve<T: Real>(path: &Path) -> Result<Curve3D<T>, CsvError> {
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let gt_layout = text
        .lines()
        .next()
        .is_some_and(|h| h.trim().starts_with("index,s,"));
    let (required, offset): (&[&str], usize) = if gt_layout {
        (&["index", "s", "x", "y", "z"], 2)
    } else {
        (&["index", "x", "y", "z"], 1)
    };
    let (cols, rows) = parse_table(&text, required, path)?;
    let points = rows
        .iter()
        .map(|r| WorldPoint::new(real(r[offset]), real(r[offset + 1]), real(r[offset + 2])))
        .collect();
    let mut curve = Curve3D::from_points(points);
    if !gt_layout {
        if let (Some(a), Some(b)) = (
            cols.iter().position(|c| c == "res1_px"),
            cols.iter().position(|c| c == "res2_px"),
        ) {
            curve.residuals = rows.iter().map(|r| (real(r[a]), real(r[b]))).collect();
        }
    }
    Ok(curve)
}

/// Ground-truth curve CSV with header `index,s,x,y,z`.
pub fn gt_curve_to_csv(curve: &Curve3D<f64>, arc: &[f64]) -> String {
    let mut s = String::from("index,s,x,y,z\n");
    for (i, (p, a)) in curve.points.iter().zip(arc).enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", i, a, p.x, p.y, p.z);
    }
    s
}

pub fn read_gt_curve(path: &Path) -> Result<(Curve3D<f64>, Vec<f64>), CsvError> {
    let rows = read_table(path, &["index", "s", "x", "y", "z"])?;
    let arc = rows.iter().map(|r| r[1]).collect();
    let points = rows.iter().map(|r| WorldPoint::new(r[2], r[3], r[4])).collect();
    Ok((Curve3D::from_points(points), arc))
}

pub fn read_sequence<T: Real>(path: &Path, view: u8) -> Result<OrderedSequence<T>, CsvError> {
    let rows = read_table(path, &["index", "u", "v"])?;
    Ok(OrderedSequence::new(
        view,
        rows.iter()
            .map(|r| PixelPoint::new(real(r[1]), real(r[2])))
            .collect(),
    ))
}

/// ASCII PLY with the points as vertices and consecutive points joined by
/// edges.
pub fn curve_to_ply<T: Real>(curve: &Curve3D<T>) -> String {
    let n = curve.points.len();
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {n}\nproperty double x\nproperty double y\n\
         property double z\nelement edge {}\nproperty int vertex1\nproperty int vertex2\n\
         end_header\n",
        n.saturating_sub(1)
    );
    for p in &curve.points {
        let _ = writeln!(s, "{} {} {}", to_f64(p.x), to_f64(p.y), to_f64(p.z));
    }
    for i in 1..n {
        let _ = writeln!(s, "{} {}", i - 1, i);
    }
    s
}
