//! Reconstruction metrics: symmetric Chamfer distance, normal consistency,
//! area-uniform mesh sampling and k-NN normal estimation.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::meshing::TriMesh;
use crate::spatial::KdTree;

/// Default number of surface samples per evaluation.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default neighborhood size for normal estimation.
pub const DEFAULT_NORMAL_K: usize = 300;

/// Points with unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointSet {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl OrientedPointSet {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::Validation(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| !((n.norm() - 1.0).abs() <= 1e-6)) {
            return Err(Error::Validation(format!("normal {i} is not unit length")));
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` area-uniform samples with their face normals, reproducible from `seed`.
pub fn sample_mesh(mesh: &TriMesh, n: usize, seed: u64) -> Result<OrientedPointSet> {
    if n == 0 {
        return Ok(OrientedPointSet::default());
    }
    let mut cumulative = Vec::with_capacity(mesh.num_faces());
    let mut total = 0.0;
    for f in 0..mesh.num_faces() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Validation("cannot sample a mesh with zero area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(mesh.num_faces() - 1);
        let [a, b, c] = mesh.triangle(face);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        normals.push(mesh.face_normal(face));
    }
    OrientedPointSet::new(points, normals)
}

/// PCA normals with a flag for points whose neighborhood has no well-defined plane.
#[derive(Debug, Clone)]
pub struct EstimatedNormals {
    pub set: OrientedPointSet,
    /// True where the covariance had rank < 2 and an arbitrary unit normal was returned.
    pub degenerate: Vec<bool>,
}

impl EstimatedNormals {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// Per-point normal from the `k` nearest neighbors (the point included): the
/// eigenvector of the smallest covariance eigenvalue. Signs are arbitrary.
pub fn estimate_normals(points: &[Vec3], k: usize) -> Result<EstimatedNormals> {
    if k == 0 || points.len() <= k {
        return Err(Error::Validation(format!(
            "normal estimation needs more than k={k} points, got {}",
            points.len()
        )));
    }
    let tree = KdTree::new(points);
    let estimates: Vec<(Vec3, bool)> = points
        .par_iter()
        .map(|p| {
            let nbrs = tree.k_nearest(p, k);
            let mean = nbrs.iter().map(|n| tree.point(n.index)).sum::<Vec3>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for n in &nbrs {
                let d = tree.point(n.index) - mean;
                cov += d * d.transpose();
            }
            plane_normal(&cov)
        })
        .collect();
    if estimates.iter().any(|(_, d)| *d) {
        log::warn!(
            "{} points have degenerate neighborhoods",
            estimates.iter().filter(|(_, d)| *d).count()
        );
    }
    let (normals, degenerate) = estimates.into_iter().unzip();
    Ok(EstimatedNormals {
        set: OrientedPointSet::new(points.to_vec(), normals)?,
        degenerate,
    })
}

fn plane_normal(cov: &Matrix3<f64>) -> (Vec3, bool) {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= 1e-12 * largest {
        return (Vec3::z(), true);
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).into();
    (n.normalize(), false)
}

/// Mean distance from each point of `from` to its nearest point of `to`.
pub fn mean_nearest_distance(from: &[Vec3], to: &[Vec3]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::Validation("nearest distance between empty point sets".into()));
    }
    let tree = KdTree::new(to);
    let dists: Vec<f64> = from
        .par_iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").dist_sq.sqrt())
        .collect();
    Ok(dists.iter().sum::<f64>() / from.len() as f64)
}

/// Symmetric Chamfer distance: mean unsquared nearest distance in both directions, summed.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    let ab = mean_nearest_distance(a, b)?;
    let ba = mean_nearest_distance(b, a)?;
    Ok(ab + ba)
}

/// Mean over ground-truth points of `|n_i . m_j|`, `j` the nearest predicted point.
pub fn normal_consistency(gt: &OrientedPointSet, pred: &OrientedPointSet) -> Result<f64> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::Validation("normal consistency of empty point sets".into()));
    }
    let tree = KdTree::new(pred.points());
    let cos: Vec<f64> = gt
        .points()
        .par_iter()
        .zip(gt.normals())
        .map(|(p, n)| {
            let j = tree.nearest(p).expect("non-empty tree").index;
            n.dot(&pred.normals()[j]).abs().min(1.0)
        })
        .collect();
    Ok(cos.iter().sum::<f64>() / gt.len() as f64)
}

/// Chamfer (in thousandths of a scene unit) and normal consistency of a
/// reconstruction against ground-truth samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub chamfer_mm: f64,
    pub normal_cos: f64,
    pub n_samples: usize,
    pub k: usize,
}

/// Samples `n_samples` points on `mesh`, re-estimates their normals with k-NN
/// PCA and compares against the ground-truth oriented samples.
pub fn evaluate_mesh(mesh: &TriMesh, gt: &OrientedPointSet, n_samples: usize, k: usize, seed: u64) -> Result<Evaluation> {
    let pred = sample_mesh(mesh, n_samples, seed)?;
    let pred = estimate_normals(pred.points(), k)?.set;
    Ok(Evaluation {
        chamfer_mm: chamfer(gt.points(), pred.points())? * 1e3,
        normal_cos: normal_consistency(gt, &pred)?,
        n_samples,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(q: &Vec3, set: &[Vec3]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, p) in set.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let one = |x: &[Vec3], y: &[Vec3]| x.iter().map(|p| brute_nearest(p, y).1.sqrt()).sum::<f64>() / x.len() as f64;
        one(a, b) + one(b, a)
    }

    fn brute_normal_consistency(gt: &OrientedPointSet, pred: &OrientedPointSet) -> f64 {
        gt.points()
            .iter()
            .zip(gt.normals())
            .map(|(p, n)| n.dot(&pred.normals()[brute_nearest(p, pred.points()).0]).abs().min(1.0))
            .sum::<f64>()
            / gt.len() as f64
    }

    fn unit_square() -> TriMesh {
        TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn chamfer_hand_examples() {
        let a = [Vec3::zeros()];
        let b = [Vec3::x()];
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(chamfer(&a, &[]).is_err());
    }

    #[test]
    fn normal_consistency_examples() {
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let ns = vec![Vec3::z(), Vec3::x(), Vec3::new(0.6, 0.8, 0.0)];
        let a = OrientedPointSet::new(pts.clone(), ns.clone()).unwrap();
        assert_eq!(normal_consistency(&a, &a).unwrap(), 1.0);
        let flipped = OrientedPointSet::new(pts.clone(), ns.iter().map(|n| -n).collect()).unwrap();
        assert_eq!(normal_consistency(&a, &flipped).unwrap(), 1.0);
        let ortho = OrientedPointSet::new(pts, vec![Vec3::x(), Vec3::z(), Vec3::new(-0.8, 0.6, 0.0)]).unwrap();
        assert!(normal_consistency(&a, &ortho).unwrap().abs() < 1e-15);
        assert!(OrientedPointSet::new(vec![Vec3::zeros()], vec![]).is_err());
        assert!(OrientedPointSet::new(vec![Vec3::zeros()], vec![Vec3::new(0.0, 0.0, 2.0)]).is_err());
    }

    #[test]
    fn sampling_square() {
        let m = unit_square();
        let s = sample_mesh(&m, 100_000, 1).unwrap();
        let c = s.points().iter().sum::<Vec3>() / s.len() as f64;
        assert!((c.x - 0.5).abs() < 0.01 && (c.y - 0.5).abs() < 0.01);
        assert!(s.points().iter().all(|p| p.z == 0.0 && (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
        assert!(sample_mesh(&m, 0, 1).unwrap().is_empty());
        assert_eq!(sample_mesh(&m, 50, 9).unwrap(), sample_mesh(&m, 50, 9).unwrap());
    }

    #[test]
    fn samples_lie_on_faces_with_area_proportional_counts() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(3.0, 0.0, 1.0), Vec3::new(0.0, 3.0, 1.0), Vec3::new(0.0, 0.0, 1.0)],
            vec![[0, 1, 2], [5, 3, 4]],
        )
        .unwrap();
        let n = 200_000;
        let s = sample_mesh(&m, n, 4).unwrap();
        let mut counts = [0usize; 2];
        for p in s.points() {
            // residual against the face plane
            let face = usize::from(p.z > 0.5);
            let [a, b, c] = m.triangle(face);
            let nrm = (b - a).cross(&(c - a)).normalize();
            assert!((p - a).dot(&nrm).abs() < 1e-9);
            // inside-triangle test in the face plane
            let l = [(b - a).cross(&(p - a)), (c - b).cross(&(p - b)), (a - c).cross(&(p - c))];
            assert!(l.iter().all(|v| v.dot(&nrm) >= -1e-9));
            counts[face] += 1;
        }
        let p_small = 0.5 / (0.5 + 4.5);
        let mean = n as f64 * p_small;
        let sigma = (n as f64 * p_small * (1.0 - p_small)).sqrt();
        assert!((counts[0] as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
    }

    #[test]
    fn degenerate_mesh_cannot_be_sampled() {
        let m = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(sample_mesh(&m, 10, 0).is_err());
    }

    #[test]
    fn planar_normals() {
        let pts: Vec<Vec3> = (0..400).map(|i| Vec3::new((i % 20) as f64 * 0.1, (i / 20) as f64 * 0.13, 0.0)).collect();
        for k in [5, 10, 50] {
            let est = estimate_normals(&pts, k).unwrap();
            assert_eq!(est.degenerate_count(), 0);
            for n in est.set.normals() {
                assert!((n.z.abs() - 1.0).abs() < 1e-6, "{n:?}");
            }
        }
        assert!(estimate_normals(&pts[..5], 5).is_err());
    }

    #[test]
    fn sphere_normals_are_radial() {
        let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 5);
        let s = sample_mesh(&m, 10_000, 2).unwrap();
        let est = estimate_normals(s.points(), DEFAULT_NORMAL_K).unwrap();
        let good = est
            .set
            .points()
            .iter()
            .zip(est.set.normals())
            .filter(|(p, n)| n.dot(&p.normalize()).abs() > 0.99)
            .count();
        assert!(good as f64 >= 0.99 * s.len() as f64, "{good}");
    }

    #[test]
    fn duplicate_points_are_flagged() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0); 12];
        let est = estimate_normals(&pts, 4).unwrap();
        assert_eq!(est.degenerate_count(), 12);
        assert!(est.set.normals().iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mesh_against_itself() {
        let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 3);
        let s = sample_mesh(&m, 2000, 5).unwrap();
        assert_eq!(chamfer(s.points(), s.points()).unwrap(), 0.0);
        assert_eq!(normal_consistency(&s, &s).unwrap(), 1.0);
    }

    fn pts(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z)), 1..=max)
    }

    fn oriented(max: usize) -> impl Strategy<Value = OrientedPointSet> {
        prop::collection::vec(
            ((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0)),
            1..=max,
        )
        .prop_map(|v| {
            let (p, n): (Vec<_>, Vec<_>) = v
                .into_iter()
                .map(|((x, y, z), (a, b, c))| (Vec3::new(x, y, z), Vec3::new(a, b, c).normalize()))
                .unzip();
            OrientedPointSet::new(p, n).unwrap()
        })
    }

    proptest! {
        #[test]
        fn chamfer_matches_brute_force(a in pts(10), b in pts(10)) {
            let c = chamfer(&a, &b).unwrap();
            prop_assert_eq!(c, brute_chamfer(&a, &b));
            prop_assert_eq!(c, chamfer(&b, &a).unwrap());
            prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn chamfer_rigid_invariance(a in pts(30), b in pts(30), angle in 0.0f64..6.0, t in -3.0f64..3.0) {
            let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::y_axis(), angle);
            let move_ = |v: &[Vec3]| v.iter().map(|p| r * p + Vec3::new(t, -t, 0.5)).collect::<Vec<_>>();
            let c0 = chamfer(&a, &b).unwrap();
            let c1 = chamfer(&move_(&a), &move_(&b)).unwrap();
            prop_assert!((c0 - c1).abs() < 1e-9);
        }

        #[test]
        fn normal_consistency_matches_brute_force(gt in oriented(10), pred in oriented(10)) {
            let v = normal_consistency(&gt, &pred).unwrap();
            prop_assert_eq!(v, brute_normal_consistency(&gt, &pred));
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
