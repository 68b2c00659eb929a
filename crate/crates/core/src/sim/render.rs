use nalgebra::{Point2, Point3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Scene, SimError, TruthKind, ViewObservation};
use crate::detect::{gaussian_blur, Grid};
use crate::geometry::CArmCamera;

const BACKGROUND: f64 = 0.72;
const BONE_CONTRAST: f64 = 0.28;
const BB_CONTRAST: f64 = 0.55;
const WIRE_CONTRAST: f64 = 0.3;
const PIXEL_NOISE: f64 = 0.004;
const BONE_GRID_FACTOR: usize = 4;

/// Smooth value noise with lattice spacing `cell` px.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: f64, rng: &mut impl Rng) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 2;
        let rows = (height as f64 / cell).ceil() as usize + 2;
        Self {
            cell,
            cols,
            lattice: (0..cols * rows).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (s(fx - ix as f64), s(fy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bot = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

/// Fraction of pixel `(x, y)` covered by a disk, by 4×4 supersampling.
fn disk_coverage(x: usize, y: usize, c: &Point2<f64>, r: f64) -> f64 {
    let mut hits = 0;
    for sy in 0..4 {
        for sx in 0..4 {
            let px = x as f64 - 0.375 + 0.25 * sx as f64;
            let py = y as f64 - 0.375 + 0.25 * sy as f64;
            if (px - c.x).powi(2) + (py - c.y).powi(2) <= r * r {
                hits += 1;
            }
        }
    }
    hits as f64 / 16.0
}

/// Darken `grid` by `contrast × coverage` of a disk.
fn stamp_disk(grid: &mut Grid, c: &Point2<f64>, r: f64, contrast: f64) {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let (x0, x1) = ((c.x - r - 1.0).floor() as isize, (c.x + r + 1.0).ceil() as isize);
    let (y0, y1) = ((c.y - r - 1.0).floor() as isize, (c.y + r + 1.0).ceil() as isize);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            let cov = disk_coverage(x as usize, y as usize, c, r);
            if cov > 0.0 {
                let v = grid.get(x as usize, y as usize);
                grid.set(x as usize, y as usize, v - contrast * cov);
            }
        }
    }
}

/// Dark disks of `radius` px on a unit background, optionally blurred.
pub fn render_disk_phantom(width: usize, height: usize, centers: &[(f64, f64)], radius: f64, blur_sigma: f64) -> Grid {
    let mut g = Grid::new(width, height, 1.0);
    for &(x, y) in centers {
        stamp_disk(&mut g, &Point2::new(x, y), radius, 1.0);
    }
    if blur_sigma > 0.0 {
        g = gaussian_blur(&g, blur_sigma);
    }
    g
}

/// Projected BB radius (px) of a sphere of `diameter_mm` at volume point `p`.
pub fn bb_radius_px(camera: &CArmCamera, p: &Point3<f64>, diameter_mm: f64) -> f64 {
    let pc = camera.extrinsics().apply(p);
    let depth = (pc - camera.source()).dot(camera.depth_axis());
    0.5 * diameter_mm * camera.source_to_detector() / depth / camera.pixel_spacing()
}

fn bone_map(points: &[Point3<f64>], camera: &CArmCamera) -> Grid {
    let f = BONE_GRID_FACTOR as f64;
    let (w, h) = (camera.cols() / BONE_GRID_FACTOR, camera.rows() / BONE_GRID_FACTOR);
    let mut g = Grid::new(w, h, 0.0);
    for p in points {
        let Ok(px) = camera.project(p) else { continue };
        let (gx, gy) = (((px.x + 0.5) / f - 0.5).round(), ((px.y + 0.5) / f - 0.5).round());
        if gx >= 0.0 && gy >= 0.0 && (gx as usize) < w && (gy as usize) < h {
            let (x, y) = (gx as usize, gy as usize);
            g.set(x, y, g.get(x, y) + 1.0);
        }
    }
    let mut g = gaussian_blur(&g, 2.0);
    let mut sorted: Vec<f64> = g.data().iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let scale = sorted.get(sorted.len() * 98 / 100).copied().unwrap_or(1.0).max(1e-12);
    g.data_mut().iter_mut().for_each(|v| *v = (*v / scale).min(1.0));
    g
}

fn bilinear(g: &Grid, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (g.width() - 1) as f64);
    let y = y.clamp(0.0, (g.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(g.width() - 1), (y0 + 1).min(g.height() - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let top = g.get(x0, y0) * (1.0 - tx) + g.get(x1, y0) * tx;
    let bot = g.get(x0, y1) * (1.0 - tx) + g.get(x1, y1) * tx;
    top * (1.0 - ty) + bot * ty
}

fn stamp_wire(grid: &mut Grid, through: &Point2<f64>, angle: f64, half_len: f64, half_width: f64) {
    let d = Point2::new(angle.cos(), angle.sin());
    let (a, b) = (through - d.coords * half_len, through + d.coords * half_len);
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let pad = half_width + 1.0;
    let (x0, x1) = ((a.x.min(b.x) - pad).floor() as isize, (a.x.max(b.x) + pad).ceil() as isize);
    let (y0, y1) = ((a.y.min(b.y) - pad).floor() as isize, (a.y.max(b.y) + pad).ceil() as isize);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            let p = Point2::new(x as f64, y as f64);
            let t = ((p - a).dot(&d.coords)).clamp(0.0, 2.0 * half_len);
            let dist = (p - (a + d.coords * t)).norm();
            let cov = (half_width + 0.5 - dist).clamp(0.0, 1.0);
            if cov > 0.0 {
                let v = grid.get(x as usize, y as usize);
                grid.set(x as usize, y as usize, v - WIRE_CONTRAST * cov);
            }
        }
    }
}

/// Render the grayscale image of an observed view: textured background,
/// bone shadow, BB disks at their exact projections, K-wires over occluded
/// BBs and disk-like blobs at false detections.
pub fn render_view(scene: &Scene, obs: &ViewObservation, rng: &mut impl Rng) -> Result<Grid, SimError> {
    let cam = &obs.camera_true;
    let (w, h) = (cam.cols(), cam.rows());
    let coarse = ValueNoise::new(w, h, 192.0, rng);
    let fine = ValueNoise::new(w, h, 48.0, rng);
    let surface = if obs.postop { scene.surface_moved() } else { scene.surface.points().to_vec() };
    let bone = bone_map(&surface, cam);
    let f = BONE_GRID_FACTOR as f64;

    let mut g = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let bg = BACKGROUND + 0.06 * coarse.at(xf, yf) + 0.02 * fine.at(xf, yf);
            let b = bilinear(&bone, (xf + 0.5) / f - 0.5, (yf + 0.5) / f - 0.5);
            g.set(x, y, bg - BONE_CONTRAST * b);
        }
    }

    let frag = if obs.postop { scene.fragment_bbs_moved() } else { scene.fragment_bbs.bbs().to_vec() };
    let position = |k: TruthKind| -> Option<Point3<f64>> {
        match k {
            TruthKind::Ilium(i) => Some(scene.ilium_bbs.bbs()[i]),
            TruthKind::Fragment(i) => Some(frag[i]),
            TruthKind::Contralateral(i) => Some(scene.contralateral_bbs[i]),
            TruthKind::False => None,
        }
    };
    let default_r = bb_radius_px(cam, &scene.ilium_bbs.centroid(), scene.bb_diameter_mm);
    for t in &obs.truth {
        let r = position(t.kind).map(|p| bb_radius_px(cam, &p, scene.bb_diameter_mm)).unwrap_or(default_r);
        stamp_disk(&mut g, &t.exact, r, BB_CONTRAST);
    }
    for k in &obs.occluded {
        if let Some(p) = position(*k) {
            let c = cam.project(&p)?;
            stamp_wire(&mut g, &c, rng.random_range(0.0..std::f64::consts::PI), 250.0, 1.5);
        }
    }
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("positive sigma");
    g.data_mut().iter_mut().for_each(|v| *v = (*v + noise.sample(rng)).clamp(0.0, 1.0));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_disk_is_dark_at_center() {
        let g = render_disk_phantom(32, 32, &[(15.0, 16.0)], 4.0, 0.0);
        assert_eq!(g.get(15, 16), 0.0);
        assert_eq!(g.get(0, 0), 1.0);
        // Coverage of a 4 px disk sums to roughly its area.
        let dark: f64 = g.data().iter().map(|v| 1.0 - v).sum();
        assert!((dark - std::f64::consts::PI * 16.0).abs() < 1.5);
    }
}
