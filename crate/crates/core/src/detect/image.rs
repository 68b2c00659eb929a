use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::DetectError;

/// Row-major 2D grid of `f64` samples. Used both for normalized grayscale
/// images (values in `[0, 1]`) and for detector response maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, DetectError> {
        if data.len() != width * height {
            return Err(DetectError::ShapeMismatch);
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub(crate) fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Block-average downsampling by an integer factor (partial blocks dropped).
    pub fn downsample(&self, factor: usize) -> Grid {
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Grid::new(w, h, 0.0);
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in 0..factor {
                    let row = (y * factor + dy) * self.width;
                    for dx in 0..factor {
                        s += self.data[row + x * factor + dx];
                    }
                }
                out.set(x, y, s * norm);
            }
        }
        out
    }

    /// Integer translation; uncovered pixels take `fill`.
    pub fn shifted(&self, dx: isize, dy: isize, fill: f64) -> Grid {
        let mut out = Grid::new(self.width, self.height, fill);
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                let (sx, sy) = (x - dx, y - dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < self.width && (sy as usize) < self.height {
                    out.set(x as usize, y as usize, self.get(sx as usize, sy as usize));
                }
            }
        }
        out
    }
}

/// Read an 8- or 16-bit grayscale PGM or PNG and normalize to `[0, 1]`.
pub fn load_grayscale(path: &Path) -> Result<Grid, DetectError> {
    let img = image::open(path).map_err(|e| DetectError::Io(format!("{}: {e}", path.display())))?;
    let (data, w, h) = match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            (buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(), w, h)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            (buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(), w, h)
        }
        other => {
            let buf = other.into_luma16();
            let (w, h) = buf.dimensions();
            (buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(), w, h)
        }
    };
    Grid::from_vec(w as usize, h as usize, data)
}

/// Write a `[0, 1]` grid as a 16-bit grayscale image; the format follows the
/// file extension (`.pgm` or `.png`).
pub fn save_grayscale16(grid: &Grid, path: &Path) -> Result<(), DetectError> {
    let raw: Vec<u16> = grid
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(grid.width as u32, grid.height as u32, raw).ok_or(DetectError::ShapeMismatch)?;
    buf.save(path).map_err(|e| DetectError::Io(format!("{}: {e}", path.display())))
}
