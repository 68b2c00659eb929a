use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{DetectorConfig, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Sub-pixel center `(x, y) = (column, row)`.
    pub pos: Point2<f64>,
    pub score: f64,
}

/// 2D BB detections in one view.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionSet {
    pub view_id: usize,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(view_id: usize, detections: Vec<Detection>) -> Self {
        Self { view_id, detections }
    }

    /// Unit-score detections at the given positions.
    pub fn from_points(view_id: usize, points: impl IntoIterator<Item = Point2<f64>>) -> Self {
        Self {
            view_id,
            detections: points.into_iter().map(|pos| Detection { pos, score: 1.0 }).collect(),
        }
    }

    pub fn points(&self) -> Vec<Point2<f64>> {
        self.detections.iter().map(|d| d.pos).collect()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Local maxima of `s` over a `(2r′+1)²` window exceeding `peak_fraction · max(s)`.
///
/// Plateaus resolve to the lowest `(row, col)` pixel. Output is ordered by
/// descending score, then `(row, col)`.
pub fn detect_bbs(s: &Grid, config: &DetectorConfig) -> DetectionSet {
    let m = s.max();
    if !(m > 0.0) {
        return DetectionSet::default();
    }
    let thresh = config.peak_fraction * m;
    let r = config.min_radius() as isize;
    let (w, h) = (s.width() as isize, s.height() as isize);

    let mut peaks: Vec<(usize, usize, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = s.get(x as usize, y as usize);
            if !(v > thresh) {
                continue;
            }
            if is_window_max(s, x, y, r, v, w, h) {
                peaks.push((y as usize, x as usize, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let detections = peaks
        .into_iter()
        .map(|(row, col, score)| Detection {
            pos: subpixel(s, col, row),
            score,
        })
        .collect();
    DetectionSet { view_id: 0, detections }
}

fn is_window_max(s: &Grid, x: isize, y: isize, r: isize, v: f64, w: isize, h: isize) -> bool {
    for ny in (y - r).max(0)..=(y + r).min(h - 1) {
        for nx in (x - r).max(0)..=(x + r).min(w - 1) {
            if nx == x && ny == y {
                continue;
            }
            let u = s.get(nx as usize, ny as usize);
            let earlier = (ny, nx) < (y, x);
            if u > v || (earlier && u == v) {
                return false;
            }
        }
    }
    true
}

/// Separable parabola fit through the 3x3 neighborhood; offsets clamped to ±0.5.
fn subpixel(s: &Grid, x: usize, y: usize) -> Point2<f64> {
    let offset = |a: f64, c: f64, b: f64| {
        let denom = a - 2.0 * c + b;
        if denom < 0.0 {
            (0.5 * (a - b) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let dx = if x > 0 && x + 1 < s.width() {
        offset(s.get(x - 1, y), s.get(x, y), s.get(x + 1, y))
    } else {
        0.0
    };
    let dy = if y > 0 && y + 1 < s.height() {
        offset(s.get(x, y - 1), s.get(x, y), s.get(x, y + 1))
    } else {
        0.0
    };
    Point2::new(x as f64 + dx, y as f64 + dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::radial_symmetry_map;
    use crate::detect::testing::render_disks;

    #[test]
    fn empty_when_no_response() {
        let s = Grid::new(20, 20, 0.0);
        assert!(detect_bbs(&s, &DetectorConfig::bb_1_5mm()).is_empty());
        let s = Grid::new(20, 20, -1.0);
        assert!(detect_bbs(&s, &DetectorConfig::bb_1_5mm()).is_empty());
    }

    #[test]
    fn threshold_excludes_weak_blob() {
        let mut s = Grid::new(30, 30, 0.0);
        s.set(5, 5, 1.0);
        s.set(20, 20, 0.19);
        s.set(20, 5, 0.21);
        let d = detect_bbs(&s, &DetectorConfig::bb_1_5mm());
        let pts = d.points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0], Point2::new(5.0, 5.0));
        assert_eq!(pts[1], Point2::new(20.0, 5.0));
    }

    #[test]
    fn plateau_resolves_to_first_pixel() {
        let mut s = Grid::new(10, 10, 0.0);
        s.set(4, 4, 1.0);
        s.set(5, 4, 1.0);
        s.set(4, 5, 1.0);
        let d = detect_bbs(&s, &DetectorConfig::bb_1mm());
        assert_eq!(d.len(), 1);
        // Anchored at (4, 4); the parabola fit pulls toward the plateau.
        let p = d.detections[0].pos;
        assert!((4.0..=4.5).contains(&p.x) && (4.0..=4.5).contains(&p.y));
    }

    #[test]
    fn two_identical_disks_two_equal_peaks() {
        let img = render_disks(96, 64, &[(24.0, 30.0), (70.0, 30.0)], 4.5, 0.5);
        let cfg = DetectorConfig::bb_1_5mm();
        let s = radial_symmetry_map(&img, &cfg).unwrap();
        let d = detect_bbs(&s, &cfg);
        assert_eq!(d.len(), 2);
        let (a, b) = (d.detections[0], d.detections[1]);
        assert!((a.score - b.score).abs() < 1e-9 * a.score);
        assert!(((b.pos.x - a.pos.x).abs() - 46.0).abs() < 1e-9);
        assert!((a.pos.y - b.pos.y).abs() < 1e-9);
    }
}
