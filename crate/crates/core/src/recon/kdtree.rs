use nalgebra::Point3;

/// Static 3D k-d tree for exact nearest-neighbor queries.
///
/// Nodes are stored implicitly: each subtree occupies a contiguous range of
/// `order`, with the splitting point at the range midpoint.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn build(points: Vec<Point3<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build_range(&points, &mut order, &mut axes, 0, points.len());
        Self { points, order, axes }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and distance of the nearest stored point.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn search(&self, q: &Point3<f64>, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build_range(points: &[Point3<f64>], order: &mut [usize], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    // Split on the axis of largest spread.
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &i in &order[lo..hi] {
        for a in 0..3 {
            min[a] = min[a].min(points[i][a]);
            max[a] = max[a].max(points[i][a]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b]))).unwrap();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    axes[mid] = axis as u8;
    build_range(points, order, axes, lo, mid);
    build_range(points, order, axes, mid + 1, hi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: &Point3<f64>) -> f64 {
        points.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::build(vec![]).nearest(&Point3::origin()).is_none());
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f64>> = (0..2000)
            .map(|_| Point3::new(rng.random_range(-100.0..100.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..10.0)))
            .collect();
        let tree = KdTree::build(pts.clone());
        for _ in 0..500 {
            let q = Point3::new(rng.random_range(-150.0..150.0), rng.random_range(-80.0..80.0), rng.random_range(-20.0..30.0));
            let (_, d) = tree.nearest(&q).unwrap();
            assert_eq!(d, brute(&pts, &q));
        }
    }

    proptest! {
        #[test]
        fn exact_nearest(cloud in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..60),
                         q in (-12.0f64..12.0, -12.0f64..12.0, -12.0f64..12.0)) {
            let pts: Vec<_> = cloud.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let q = Point3::new(q.0, q.1, q.2);
            let tree = KdTree::build(pts.clone());
            let (i, d) = tree.nearest(&q).unwrap();
            prop_assert_eq!(d, brute(&pts, &q));
            prop_assert_eq!((pts[i] - q).norm(), d);
        }
    }
}
