//! Fast radial symmetry transform, un-normalized variant.
//!
//! For each radius `n`, every pixel with a non-negligible gradient casts a
//! vote at the pixel `n` steps along (or against) its gradient direction. The
//! orientation projection `O_n` counts votes and the magnitude projection
//! `M_n` sums gradient magnitudes. There is no `k_n` normalization:
//! `F_n = M_n · |O_n|^α`, smoothed by a Gaussian of σ = n/4, and the output is
//! the sum of the smoothed maps over all radii.

use serde::{Deserialize, Serialize};

use super::{DetectError, Grid};
use crate::Execution;

/// Which blobs vote positively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Dark blobs on a bright background (attenuating metal in fluoroscopy).
    Dark,
    /// Bright blobs on a dark background.
    Bright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub radii: Vec<u32>,
    /// Radial strictness α.
    pub alpha: f64,
    /// Gaussian σ as a fraction of the radius.
    pub gaussian_sigma_factor: f64,
    /// Peaks must exceed this fraction of the global maximum.
    pub peak_fraction: f64,
    pub polarity: Polarity,
}

impl DetectorConfig {
    /// Preset for 1.5 mm BBs: a single radius of 4 px.
    pub fn bb_1_5mm() -> Self {
        Self::with_radii(vec![4])
    }

    /// Preset for 1 mm BBs: radii of 1 and 2 px.
    pub fn bb_1mm() -> Self {
        Self::with_radii(vec![1, 2])
    }

    pub fn with_radii(radii: Vec<u32>) -> Self {
        Self {
            radii,
            alpha: 1.0,
            gaussian_sigma_factor: 0.25,
            peak_fraction: 0.2,
            polarity: Polarity::Dark,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if self.radii.is_empty() || self.radii.iter().any(|&r| r == 0) {
            return Err(DetectError::InvalidConfig("radii must be non-empty positive integers".into()));
        }
        if !(self.peak_fraction > 0.0 && self.peak_fraction < 1.0) {
            return Err(DetectError::InvalidConfig("peak_fraction must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0) || !(self.gaussian_sigma_factor > 0.0) {
            return Err(DetectError::InvalidConfig("alpha and sigma factor must be positive".into()));
        }
        Ok(())
    }

    /// Smallest radius r′; sets the non-maximum suppression half-width.
    pub fn min_radius(&self) -> u32 {
        self.radii.iter().copied().min().unwrap_or(1)
    }

    pub fn max_radius(&self) -> u32 {
        self.radii.iter().copied().max().unwrap_or(1)
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::bb_1_5mm()
    }
}

/// Gradients below this fraction of the maximum magnitude cast no votes.
const VOTE_FLOOR: f64 = 1e-6;

pub fn radial_symmetry_map(image: &Grid, config: &DetectorConfig) -> Result<Grid, DetectError> {
    radial_symmetry_map_with(image, config, Execution::Parallel)
}

pub fn radial_symmetry_map_with(image: &Grid, config: &DetectorConfig, exec: Execution) -> Result<Grid, DetectError> {
    config.validate()?;
    let need = 2 * config.max_radius() as usize + 1;
    if image.width() < need || image.height() < need {
        return Err(DetectError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            min: need,
        });
    }
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(DetectError::NonFinite);
    }

    let (gx, gy) = gradients(image);
    let mags: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let gmax = mags.iter().copied().fold(0.0, f64::max);
    let (w, h) = (image.width(), image.height());
    if gmax <= 0.0 {
        return Ok(Grid::new(w, h, 0.0));
    }
    let floor = VOTE_FLOOR * gmax;

    let per_radius = exec.map(&config.radii, |&n| {
        let f = radius_response(w, h, &gx, &gy, &mags, floor, n, config);
        gaussian_blur(&f, config.gaussian_sigma_factor * n as f64)
    });
    // Fixed summation order per pixel: radii in configuration order.
    let mut out = Grid::new(w, h, 0.0);
    for s in &per_radius {
        for (o, v) in out.data_mut().iter_mut().zip(s.data()) {
            *o += v;
        }
    }
    Ok(out)
}

fn gradients(image: &Grid) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width(), image.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = 0.5 * (image.get_clamped(x + 1, y) - image.get_clamped(x - 1, y));
            gy[i] = 0.5 * (image.get_clamped(x, y + 1) - image.get_clamped(x, y - 1));
        }
    }
    (gx, gy)
}

#[allow(clippy::too_many_arguments)]
fn radius_response(
    w: usize,
    h: usize,
    gx: &[f64],
    gy: &[f64],
    mags: &[f64],
    floor: f64,
    n: u32,
    config: &DetectorConfig,
) -> Grid {
    let mut orient = vec![0.0f64; w * h];
    let mut magn = vec![0.0f64; w * h];
    let nf = n as f64;
    let sign = match config.polarity {
        Polarity::Dark => -1.0,
        Polarity::Bright => 1.0,
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mags[i];
            if m <= floor {
                continue;
            }
            let ox = (sign * nf * gx[i] / m).round() as isize;
            let oy = (sign * nf * gy[i] / m).round() as isize;
            let tx = x as isize + ox;
            let ty = y as isize + oy;
            if tx < 0 || ty < 0 || tx >= w as isize || ty >= h as isize {
                continue;
            }
            let t = ty as usize * w + tx as usize;
            orient[t] += 1.0;
            magn[t] += m;
        }
    }
    let data = orient
        .iter()
        .zip(&magn)
        .map(|(o, m)| m * o.abs().powf(config.alpha))
        .collect();
    Grid::from_vec(w, h, data).expect("shape preserved")
}

/// Separable Gaussian blur with border replication.
pub(crate) fn gaussian_blur(src: &Grid, sigma: f64) -> Grid {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ksum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= ksum);

    let (w, h) = (src.width(), src.height());
    let mut tmp = Grid::new(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                s += kv * src.get_clamped(x + k as isize - radius, y);
            }
            tmp.set(x as usize, y as usize, s);
        }
    }
    let mut out = Grid::new(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                s += kv * tmp.get_clamped(x, y + k as isize - radius);
            }
            out.set(x as usize, y as usize, s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::testing::render_disks;

    #[test]
    fn constant_image_gives_zero_map() {
        let img = Grid::new(40, 30, 0.6);
        let s = radial_symmetry_map(&img, &DetectorConfig::bb_1_5mm()).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_small_and_non_finite() {
        let img = Grid::new(8, 40, 0.5);
        assert!(matches!(
            radial_symmetry_map(&img, &DetectorConfig::bb_1_5mm()),
            Err(DetectError::ImageTooSmall { .. })
        ));
        let mut img = Grid::new(20, 20, 0.5);
        img.set(3, 3, f64::NAN);
        assert_eq!(radial_symmetry_map(&img, &DetectorConfig::bb_1_5mm()).unwrap_err(), DetectError::NonFinite);
    }

    #[test]
    fn single_disk_peak_at_center() {
        let (cx, cy) = (31.3, 27.6);
        let img = render_disks(64, 64, &[(cx, cy)], 4.5, 0.5);
        let s = radial_symmetry_map(&img, &DetectorConfig::bb_1_5mm()).unwrap();
        let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
        for (i, &v) in s.data().iter().enumerate() {
            if v > bv {
                bv = v;
                bi = i;
            }
        }
        let (x, y) = ((bi % 64) as f64, (bi / 64) as f64);
        assert!((x - cx).hypot(y - cy) <= 1.0, "peak at ({x},{y})");
    }

    #[test]
    fn sequential_and_parallel_bitwise_equal() {
        let img = render_disks(80, 60, &[(20.0, 20.0), (55.5, 33.2)], 2.0, 0.5);
        let cfg = DetectorConfig::bb_1mm();
        let a = radial_symmetry_map_with(&img, &cfg, Execution::Sequential).unwrap();
        let b = radial_symmetry_map_with(&img, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = DetectorConfig::bb_1mm();
        c.peak_fraction = 1.0;
        assert!(c.validate().is_err());
        assert!(DetectorConfig::with_radii(vec![]).validate().is_err());
    }
}
