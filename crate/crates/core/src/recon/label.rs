use nalgebra::Point3;

use super::{centroid, Constellation, ConstellationLabel, ReconError, SurfaceModel};
use crate::geometry::Side;

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL_MM: f64 = 1e-9;

/// Two-means clustering with farthest-pair seeding.
///
/// Returns the cluster index of every point. Distance ties go to cluster 0.
pub fn kmeans2(points: &[Point3<f64>]) -> Vec<usize> {
    if points.len() < 2 {
        return vec![0; points.len()];
    }
    let (mut a, mut b, mut best) = (0, 1, -1.0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (points[i] - points[j]).norm_squared();
            if d > best {
                (a, b, best) = (i, j, d);
            }
        }
    }
    let mut centers = [points[a], points[b]];
    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        for (k, p) in points.iter().enumerate() {
            assign[k] = usize::from((p - centers[1]).norm_squared() < (p - centers[0]).norm_squared());
        }
        let mut shift: f64 = 0.0;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<Point3<f64>> = points.iter().zip(&assign).filter(|(_, &k)| k == c).map(|(p, _)| *p).collect();
            if members.is_empty() {
                continue;
            }
            let next = centroid(&members);
            shift = shift.max((next - *center).norm());
            *center = next;
        }
        if shift < KMEANS_TOL_MM {
            break;
        }
    }
    assign
}

/// Drop contralateral points, split the rest into two clusters, and label the
/// cluster whose centroid is nearer `iliac_reference` as the ilium.
pub fn label_constellations(
    points: &[Point3<f64>],
    surface: &SurfaceModel,
    side: Side,
    iliac_reference: &Point3<f64>,
) -> Result<(Constellation, Constellation), ReconError> {
    let plane = surface.sagittal_plane();
    let ipsi: Vec<Point3<f64>> = points.iter().filter(|p| plane.is_ipsilateral(p, side)).copied().collect();
    if ipsi.len() < 6 {
        return Err(ReconError::TooFewBbs(ipsi.len()));
    }
    let assign = kmeans2(&ipsi);
    let clusters: [Vec<Point3<f64>>; 2] =
        [0, 1].map(|c| ipsi.iter().zip(&assign).filter(|(_, &k)| k == c).map(|(p, _)| *p).collect());
    for c in &clusters {
        if c.len() < 3 {
            return Err(ReconError::TooFewBbs(c.len()));
        }
    }
    let cents = [centroid(&clusters[0]), centroid(&clusters[1])];
    let spread = clusters
        .iter()
        .zip(&cents)
        .flat_map(|(c, m)| c.iter().map(move |p| (p - m).norm()))
        .fold(0.0, f64::max);
    if (cents[0] - cents[1]).norm() < 2.0 * spread {
        return Err(ReconError::DegenerateClusters);
    }
    let ilium_idx = usize::from((cents[1] - iliac_reference).norm() < (cents[0] - iliac_reference).norm());
    let [c0, c1] = clusters;
    let (il, fr) = if ilium_idx == 0 { (c0, c1) } else { (c1, c0) };
    Ok((
        Constellation::new(ConstellationLabel::Ilium, il)?,
        Constellation::new(ConstellationLabel::Fragment, fr)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::SagittalPlane;
    use nalgebra::Vector3;

    fn surface() -> SurfaceModel {
        SurfaceModel::new(
            vec![Point3::origin()],
            SagittalPlane {
                point: Point3::new(-90.0, 0.0, 0.0),
                normal: Vector3::x(),
            },
        )
        .unwrap()
    }

    fn cluster(c: Point3<f64>) -> Vec<Point3<f64>> {
        [(8.0, 0.0, 1.0), (-6.0, 7.0, 0.0), (0.0, -8.0, 3.0), (2.0, 3.0, -9.0)]
            .iter()
            .map(|&(x, y, z)| c + Vector3::new(x, y, z))
            .collect()
    }

    #[test]
    fn splits_two_clusters() {
        let il = cluster(Point3::new(0.0, 60.0, 0.0));
        let fr = cluster(Point3::new(10.0, 10.0, 0.0));
        let mut all: Vec<_> = fr.iter().chain(&il).copied().collect();
        all.swap(1, 6);
        let (a, b) = label_constellations(&all, &surface(), Side::Left, &Point3::new(0.0, 80.0, 0.0)).unwrap();
        assert_eq!(a.label(), ConstellationLabel::Ilium);
        assert_eq!(a.len(), 4);
        assert_eq!(b.len(), 4);
        assert!(il.iter().all(|p| a.bbs().contains(p)));
        assert!(fr.iter().all(|p| b.bbs().contains(p)));
    }

    #[test]
    fn contralateral_points_pruned_first() {
        let il = cluster(Point3::new(0.0, 60.0, 0.0));
        let fr = cluster(Point3::new(10.0, 10.0, 0.0));
        let contra: Vec<Point3<f64>> = il.iter().chain(&fr).take(6).map(|p| Point3::new(-180.0 - p.x, p.y, p.z)).collect();
        let all: Vec<_> = contra.iter().chain(&il).chain(&fr).copied().collect();
        let (a, b) = label_constellations(&all, &surface(), Side::Left, &Point3::new(0.0, 80.0, 0.0)).unwrap();
        assert_eq!(a.bbs(), il.as_slice());
        assert_eq!(b.bbs(), fr.as_slice());
    }

    #[test]
    fn overlapping_clusters_are_degenerate() {
        let a = cluster(Point3::new(0.0, 0.0, 0.0));
        let b = cluster(Point3::new(6.0, 0.0, 0.0));
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        assert!(matches!(
            label_constellations(&all, &surface(), Side::Left, &Point3::origin()),
            Err(ReconError::DegenerateClusters) | Err(ReconError::TooFewBbs(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let a = cluster(Point3::new(0.0, 0.0, 0.0));
        assert!(matches!(
            label_constellations(&a, &surface(), Side::Left, &Point3::origin()),
            Err(ReconError::TooFewBbs(4))
        ));
    }
}
