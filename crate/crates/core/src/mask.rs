//! Binary masks and their raster file formats (binary PGM and 8-bit PNG).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder, ImageFormat, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: unsupported image format ({msg})")]
    UnsupportedFormat { path: String, msg: String },
}

/// `height x width` grid of {0, 1}, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    /// Foreground pixels in row-major order as `(x, y)`.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    /// Thresholds at intensity > 127.
    pub fn from_gray(img: &GrayImage) -> Self {
        let mut m = Self::new(img.width() as usize, img.height() as usize);
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] > 127 {
                m.set(x as usize, y as usize, true);
            }
        }
        m
    }

    /// Labels 8-connected components; returns `(labels, sizes)` where label 0
    /// is background and component `k` has size `sizes[k - 1]`.
    pub fn components(&self) -> (Vec<u32>, Vec<usize>) {
        let mut labels = vec![0u32; self.data.len()];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if self.data[start] == 0 || labels[start] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            let mut size = 0;
            labels[start] = label;
            stack.push(start);
            while let Some(i) = stack.pop() {
                size += 1;
                let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if (dx != 0 || dy != 0) && self.get_signed(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if labels[j] == 0 {
                                labels[j] = label;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }
}

fn format_for(path: &Path) -> Result<ImageFormat, MaskError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        Some("png") => Ok(ImageFormat::Png),
        other => Err(MaskError::UnsupportedFormat {
            path: path.display().to_string(),
            msg: format!("extension {:?}", other.unwrap_or("")),
        }),
    }
}

/// Reads a PGM (P5) or PNG mask; intensities above 127 become foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask, MaskError> {
    let p = path.display().to_string();
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| MaskError::Io {
        path: p.clone(),
        msg: e.to_string(),
    })?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(u) => MaskError::UnsupportedFormat {
            path: p.clone(),
            msg: u.to_string(),
        },
        other => MaskError::Io {
            path: p.clone(),
            msg: other.to_string(),
        },
    })?;
    Ok(BinaryMask::from_gray(&img.to_luma8()))
}

/// Writes the mask as 0/255 grayscale; format chosen by extension.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), MaskError> {
    let p = path.display().to_string();
    let format = format_for(path)?;
    let gray = mask.to_gray();
    let mut buf = Vec::new();
    let res = match format {
        ImageFormat::Pnm => PnmEncoder::new(&mut buf)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                gray.as_raw(),
                gray.width(),
                gray.height(),
                image::ExtendedColorType::L8,
            ),
        _ => gray.write_to(&mut Cursor::new(&mut buf), format),
    };
    res.map_err(|e| MaskError::Io {
        path: p.clone(),
        msg: e.to_string(),
    })?;
    fs::write(path, buf).map_err(|e| MaskError::Io {
        path: p,
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stripe() -> BinaryMask {
        BinaryMask::from_fn(40, 30, |x, y| (x + 2 * y) % 7 < 3 || (x == 5 && y == 5))
    }

    #[test]
    fn pgm_and_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = stripe();
        for name in ["m.pgm", "m.png"] {
            let path = dir.path().join(name);
            save_mask(&m, &path).unwrap();
            assert_eq!(load_mask(&path).unwrap(), m);
        }
    }

    #[test]
    fn black_image_is_empty_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.png");
        GrayImage::new(64, 64).save(&path).unwrap();
        let m = load_mask(&path).unwrap();
        assert_eq!((m.width(), m.height()), (64, 64));
        assert!(m.is_empty());
    }

    #[test]
    fn threshold_at_127() {
        let img = GrayImage::from_fn(3, 1, |x, _| Luma([[127u8, 128, 255][x as usize]]));
        let m = BinaryMask::from_gray(&img);
        assert!(!m.get(0, 0) && m.get(1, 0) && m.get(2, 0));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        save_mask(&stripe(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_mask(&path) {
            Err(MaskError::Io { path: p, .. }) => assert!(p.ends_with("t.pgm")),
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_bad_extension() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_mask(&dir.path().join("nope.png")),
            Err(MaskError::Io { .. })
        ));
        assert!(matches!(
            load_mask(&dir.path().join("mask.bmp")),
            Err(MaskError::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn components_are_8_connected() {
        let mut m = BinaryMask::new(5, 5);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(4, 4, true);
        let (_, sizes) = m.components();
        assert_eq!(sizes, vec![2, 1]);
    }
}
