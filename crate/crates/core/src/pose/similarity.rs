use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::detect::Grid;
use crate::geometry::{CArmCamera, RigidTransform};

/// Points splatted to form the expected attenuation of a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplatModel {
    /// Pelvis surface samples (volume frame).
    pub surface: Vec<Point3<f64>>,
    /// BB positions (volume frame).
    pub bbs: Vec<Point3<f64>>,
    pub bb_weight: f64,
    /// Splat standard deviation in target-grid pixels.
    pub sigma: f64,
}

impl SplatModel {
    /// Keep at most `max_surface` surface samples, evenly strided.
    pub fn new(surface: &[Point3<f64>], bbs: Vec<Point3<f64>>, max_surface: usize, bb_weight: f64, sigma: f64) -> Self {
        let stride = surface.len().div_ceil(max_surface.max(1)).max(1);
        Self {
            surface: surface.iter().step_by(stride).copied().collect(),
            bbs,
            bb_weight,
            sigma,
        }
    }
}

/// Downsampled attenuation (`1 − intensity`) of a view.
#[derive(Debug, Clone)]
pub struct SplatTarget {
    grid: Grid,
    factor: usize,
    mean: f64,
    norm: f64,
}

impl SplatTarget {
    pub fn new(image: &Grid, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut grid = image.downsample(factor);
        grid.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        let n = grid.data().len() as f64;
        let mean = grid.data().iter().sum::<f64>() / n;
        let norm = grid.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        Self { grid, factor, mean, norm }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// Negative normalized cross-correlation between a Gaussian splat rendering
/// of `model` under `pose` and the target attenuation. Lower is better; 0
/// when nothing projects into the image.
pub fn splat_similarity(pose: &RigidTransform, model: &SplatModel, target: &SplatTarget, camera: &CArmCamera) -> f64 {
    let (w, h) = (target.grid.width(), target.grid.height());
    let mut tpl = vec![0.0; w * h];
    let f = target.factor as f64;
    let radius = (3.0 * model.sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * model.sigma * model.sigma);
    let mut splat = |p: &Point3<f64>, weight: f64| {
        let Ok(px) = camera.project_carm(&pose.apply(p)) else { return };
        let (gx, gy) = ((px.x + 0.5) / f - 0.5, (px.y + 0.5) / f - 0.5);
        let (cx, cy) = (gx.round() as isize, gy.round() as isize);
        for y in cy - radius..=cy + radius {
            if y < 0 || y >= h as isize {
                continue;
            }
            for x in cx - radius..=cx + radius {
                if x < 0 || x >= w as isize {
                    continue;
                }
                let d2 = (x as f64 - gx).powi(2) + (y as f64 - gy).powi(2);
                tpl[y as usize * w + x as usize] += weight * (-d2 * inv).exp();
            }
        }
    };
    for p in &model.surface {
        splat(p, 1.0);
    }
    for p in &model.bbs {
        splat(p, model.bb_weight);
    }
    let n = tpl.len() as f64;
    let tmean = tpl.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut tvar = 0.0;
    for (t, a) in tpl.iter().zip(target.grid.data()) {
        let dt = t - tmean;
        cov += dt * (a - target.mean);
        tvar += dt * dt;
    }
    let denom = tvar.sqrt() * target.norm;
    if denom <= 0.0 {
        return 0.0;
    }
    -cov / denom
}

/// Index of the lowest score; ties go to the lower index.
pub fn stable_argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some(b) if scores[b] <= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_lower_and_earlier() {
        assert_eq!(stable_argmin(&[0.3, 0.1]), Some(1));
        assert_eq!(stable_argmin(&[0.1, 0.1, 0.3]), Some(0));
        assert_eq!(stable_argmin(&[]), None);
    }
}
