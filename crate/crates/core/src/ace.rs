//! Geometric apparent-contour-event oracle.
//!
//! A scene surface and a camera center determine the contour generator: the
//! curve of surface points whose viewing rays graze the surface. An event is
//! an ACE when its pixel lies within a pixel tolerance of the contour
//! generator projected at the event's interpolated pose.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStream, Label};
use crate::geometry::{CameraIntrinsics, Pose, Ray, Trajectory, Vec2, Vec3};
use crate::meshing::{read_mesh, ray_triangle, TriMesh};
use crate::metrics::{sample_mesh, OrientedPointSet};

/// Default labeling tolerance in pixels.
pub const DEFAULT_TOL_PX: f64 = 1.5;

/// Segments used to discretize a full circle of a contour generator.
const CIRCLE_SEGMENTS: usize = 256;

/// A closed object surface: an analytic primitive or a watertight mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSurface {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Box { center: Vec3, half_extents: Vec3 },
    /// Capped cylinder around a unit `axis` through `center`.
    Cylinder { center: Vec3, radius: f64, half_height: f64, axis: Vec3 },
    Mesh(TriMesh),
}

impl SceneSurface {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        let s = SceneSurface::Sphere { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Result<Self> {
        let s = SceneSurface::Box { center, half_extents };
        s.validate()?;
        Ok(s)
    }

    pub fn cylinder(center: Vec3, radius: f64, half_height: f64, axis: Vec3) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(Error::Validation("cylinder axis must be non-zero".into()));
        }
        let s = SceneSurface::Cylinder { center, radius, half_height, axis: axis / n };
        s.validate()?;
        Ok(s)
    }

    pub fn mesh(mesh: TriMesh) -> Result<Self> {
        let s = SceneSurface::Mesh(mesh);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            SceneSurface::Sphere { radius, .. } => positive(*radius, "sphere radius"),
            SceneSurface::Box { half_extents, .. } => half_extents.iter().try_for_each(|&h| positive(h, "box half-extent")),
            SceneSurface::Cylinder { radius, half_height, axis, .. } => {
                positive(*radius, "cylinder radius")?;
                positive(*half_height, "cylinder half-height")?;
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation("cylinder axis must be a unit vector".into()));
                }
                Ok(())
            }
            SceneSurface::Mesh(m) => {
                if m.num_faces() == 0 || !m.is_watertight() {
                    return Err(Error::Validation("scene mesh must be non-empty and watertight".into()));
                }
                Ok(())
            }
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            SceneSurface::Sphere { center, radius } => (center - Vec3::repeat(*radius), center + Vec3::repeat(*radius)),
            SceneSurface::Box { center, half_extents } => (center - half_extents, center + half_extents),
            SceneSurface::Cylinder { center, radius, half_height, axis } => {
                let ext = axis.map(|a| half_height * a.abs() + radius * (1.0 - a * a).max(0.0).sqrt());
                (center - ext, center + ext)
            }
            SceneSurface::Mesh(m) => m.bounds().expect("validated mesh has vertices"),
        }
    }

    /// Largest distance between two surface points (bounding-box diagonal for meshes).
    pub fn diameter(&self) -> f64 {
        match self {
            SceneSurface::Sphere { radius, .. } => 2.0 * radius,
            SceneSurface::Box { half_extents, .. } => 2.0 * half_extents.norm(),
            SceneSurface::Cylinder { radius, half_height, .. } => 2.0 * radius.hypot(*half_height),
            SceneSurface::Mesh(_) => {
                let (lo, hi) = self.bounds();
                (hi - lo).norm()
            }
        }
    }

    /// Closed-solid membership.
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            SceneSurface::Sphere { center, radius } => (p - center).norm() <= *radius,
            SceneSurface::Box { center, half_extents } => (p - center).abs().iter().zip(half_extents.iter()).all(|(d, h)| d <= h),
            SceneSurface::Cylinder { center, radius, half_height, axis } => {
                let v = p - center;
                let s = v.dot(axis);
                s.abs() <= *half_height && (v - axis * s).norm() <= *radius
            }
            SceneSurface::Mesh(m) => m.contains(p),
        }
    }

    /// Distance along the ray to the first surface crossing, if any.
    pub fn ray_intersect(&self, ray: &Ray) -> Option<f64> {
        match self {
            SceneSurface::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [-b - sq, -b + sq].into_iter().find(|&t| t > 0.0)
            }
            SceneSurface::Box { center, half_extents } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    let o = ray.origin[a] - center[a];
                    let d = ray.direction[a];
                    if d == 0.0 {
                        if o.abs() > half_extents[a] {
                            return None;
                        }
                        continue;
                    }
                    let (ta, tb) = ((-half_extents[a] - o) / d, (half_extents[a] - o) / d);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t0 > t1 {
                    return None;
                }
                [t0, t1].into_iter().find(|&t| t > 0.0)
            }
            SceneSurface::Cylinder { center, radius, half_height, axis } => {
                let o = ray.origin - center;
                let (os, ds) = (o.dot(axis), ray.direction.dot(axis));
                let (op, dp) = (o - axis * os, ray.direction - axis * ds);
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > 0.0 && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a2 = dp.norm_squared();
                if a2 > 0.0 {
                    let b = op.dot(&dp);
                    let c = op.norm_squared() - radius * radius;
                    let disc = b * b - a2 * c;
                    if disc >= 0.0 {
                        for t in [(-b - disc.sqrt()) / a2, (-b + disc.sqrt()) / a2] {
                            if (os + t * ds).abs() <= *half_height {
                                consider(t);
                            }
                        }
                    }
                }
                if ds != 0.0 {
                    for cap in [-half_height, *half_height] {
                        let t = (cap - os) / ds;
                        if (op + dp * t).norm() <= *radius {
                            consider(t);
                        }
                    }
                }
                best
            }
            SceneSurface::Mesh(m) => m.ray_intersect(ray, 0.0).map(|(t, _)| t),
        }
    }

    /// `n` area-uniform surface samples with outward normals, reproducible from `seed`.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<OrientedPointSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        match self {
            SceneSurface::Sphere { center, radius } => {
                while points.len() < n {
                    let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let len = v.norm();
                    if len < 1e-12 {
                        continue;
                    }
                    let u = v / len;
                    points.push(center + u * *radius);
                    normals.push(u);
                }
            }
            SceneSurface::Box { center, half_extents: h } => {
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = areas.iter().sum::<f64>() * 2.0;
                for _ in 0..n {
                    let mut pick = rng.random::<f64>() * total;
                    let mut face = 0;
                    while face < 5 && pick >= areas[face / 2] {
                        pick -= areas[face / 2];
                        face += 1;
                    }
                    let axis = face / 2;
                    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                    let mut local = Vec3::new(rng.random_range(-h.x..=h.x), rng.random_range(-h.y..=h.y), rng.random_range(-h.z..=h.z));
                    local[axis] = sign * h[axis];
                    let mut nrm = Vec3::zeros();
                    nrm[axis] = sign;
                    points.push(center + local);
                    normals.push(nrm);
                }
            }
            SceneSurface::Cylinder { center, radius, half_height, axis } => {
                let (e1, e2) = orthonormal_basis(axis);
                let lateral = TAU * radius * 2.0 * half_height;
                let cap = std::f64::consts::PI * radius * radius;
                for _ in 0..n {
                    let pick = rng.random::<f64>() * (lateral + 2.0 * cap);
                    let theta = rng.random::<f64>() * TAU;
                    let m = e1 * theta.cos() + e2 * theta.sin();
                    if pick < lateral {
                        let s = rng.random_range(-half_height..=*half_height);
                        points.push(center + m * *radius + axis * s);
                        normals.push(m);
                    } else {
                        let sign = if pick < lateral + cap { 1.0 } else { -1.0 };
                        let rho = radius * rng.random::<f64>().sqrt();
                        points.push(center + m * rho + axis * (sign * half_height));
                        normals.push(axis * sign);
                    }
                }
            }
            SceneSurface::Mesh(m) => return sample_mesh(m, n, seed),
        }
        OrientedPointSet::new(points, normals)
    }
}

/// Serializable scene description, as stored in manifests and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SceneSpec {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    Cylinder { center: [f64; 3], radius: f64, half_height: f64, axis: [f64; 3] },
    Mesh { path: PathBuf },
}

impl SceneSpec {
    pub fn build(&self) -> Result<SceneSurface> {
        match self {
            SceneSpec::Sphere { center, radius } => SceneSurface::sphere(Vec3::from(*center), *radius),
            SceneSpec::Box { center, half_extents } => SceneSurface::cuboid(Vec3::from(*center), Vec3::from(*half_extents)),
            SceneSpec::Cylinder { center, radius, half_height, axis } => {
                SceneSurface::cylinder(Vec3::from(*center), *radius, *half_height, Vec3::from(*axis))
            }
            SceneSpec::Mesh { path } => SceneSurface::mesh(read_mesh(path)?),
        }
    }
}

fn orthonormal_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// A piece of the contour generator with the surface normal at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPolyline {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

/// The curve of tangency between a surface and the rays from one camera center.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGenerator {
    pub pose: Pose,
    pub segments: Vec<ContourPolyline>,
}

impl ContourGenerator {
    pub fn points(&self) -> impl Iterator<Item = (&Vec3, &Vec3)> {
        self.segments.iter().flat_map(|s| s.points.iter().zip(&s.normals))
    }

    /// Largest `|n . (X - c)|` over all contour points, `c` the camera center.
    pub fn max_tangency_residual(&self) -> f64 {
        let c = self.pose.center();
        self.points().map(|(x, n)| n.dot(&(x - c)).abs()).fold(0.0, f64::max)
    }

    /// Image-plane polylines; pieces behind the camera are dropped.
    pub fn project(&self, intr: &CameraIntrinsics) -> ProjectedContour {
        let mut polylines = Vec::new();
        for seg in &self.segments {
            let mut current = Vec::new();
            for x in &seg.points {
                match intr.project(&self.pose.to_camera(x)) {
                    Some(px) => current.push(px),
                    None => {
                        if current.len() > 1 {
                            polylines.push(std::mem::take(&mut current));
                        }
                        current.clear();
                    }
                }
            }
            if !current.is_empty() {
                polylines.push(current);
            }
        }
        ProjectedContour::new(polylines)
    }
}

/// The apparent contour in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedContour {
    pub polylines: Vec<Vec<Vec2>>,
    /// Cumulative image length at the end of each segment, over all polylines.
    cumulative: Vec<(f64, usize, usize)>,
}

impl ProjectedContour {
    fn new(polylines: Vec<Vec<Vec2>>) -> Self {
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (pi, pl) in polylines.iter().enumerate() {
            for si in 0..pl.len().saturating_sub(1) {
                total += (pl[si + 1] - pl[si]).norm();
                cumulative.push((total, pi, si));
            }
        }
        Self { polylines, cumulative }
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().map_or(0.0, |c| c.0)
    }

    /// Distance from a pixel to the nearest contour point.
    pub fn distance(&self, q: &Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for pl in &self.polylines {
            if pl.len() == 1 {
                best = best.min((q - pl[0]).norm());
            }
            for w in pl.windows(2) {
                best = best.min(point_segment_distance(q, &w[0], &w[1]));
            }
        }
        best
    }

    /// Point at arc-length fraction `u` in `[0, 1)` and the unit tangent there.
    pub fn sample(&self, u: f64) -> Option<(Vec2, Vec2)> {
        let total = self.length();
        if !(total > 0.0) {
            return None;
        }
        let target = u.clamp(0.0, 1.0) * total;
        let k = self.cumulative.partition_point(|c| c.0 <= target).min(self.cumulative.len() - 1);
        let (end, pi, si) = self.cumulative[k];
        let (a, b) = (self.polylines[pi][si], self.polylines[pi][si + 1]);
        let len = (b - a).norm();
        let start = end - len;
        let s = ((target - start) / len).clamp(0.0, 1.0);
        Some((a + (b - a) * s, (b - a) / len))
    }

    pub fn points(&self) -> impl Iterator<Item = &Vec2> {
        self.polylines.iter().flatten()
    }
}

fn point_segment_distance(q: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((q - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (q - (a + ab * s)).norm()
}

/// Contour generator of `surface` seen from `pose`'s camera center.
pub fn contour_generator(surface: &SceneSurface, pose: &Pose) -> Result<ContourGenerator> {
    let p = pose.center();
    if surface.contains(&p) {
        return Err(Error::Domain("camera center is inside the surface".into()));
    }
    let segments = match surface {
        SceneSurface::Sphere { center, radius } => sphere_contour(center, *radius, &p),
        SceneSurface::Box { center, half_extents } => box_contour(center, half_extents, &p),
        SceneSurface::Cylinder { center, radius, half_height, axis } => cylinder_contour(center, *radius, *half_height, axis, &p),
        SceneSurface::Mesh(m) => mesh_contour(m, &p),
    };
    Ok(ContourGenerator { pose: *pose, segments })
}

fn sphere_contour(c: &Vec3, r: f64, p: &Vec3) -> Vec<ContourPolyline> {
    let v = p - c;
    let d = v.norm();
    let u = v / d;
    // tangency (X - c) . (p - c) = r^2 puts the contour in a plane r^2/d from the center
    let circle_center = c + u * (r * r / d);
    let rho = r * (1.0 - (r / d).powi(2)).max(0.0).sqrt();
    let (e1, e2) = orthonormal_basis(&u);
    let mut points = Vec::with_capacity(CIRCLE_SEGMENTS + 1);
    let mut normals = Vec::with_capacity(CIRCLE_SEGMENTS + 1);
    for k in 0..=CIRCLE_SEGMENTS {
        let th = TAU * (k % CIRCLE_SEGMENTS) as f64 / CIRCLE_SEGMENTS as f64;
        let x = circle_center + (e1 * th.cos() + e2 * th.sin()) * rho;
        normals.push((x - c) / r);
        points.push(x);
    }
    vec![ContourPolyline { points, normals }]
}

/// Normal of the plane through the camera and the line `a -> b`, on the side of `outward`.
fn grazing_plane_normal(a: &Vec3, b: &Vec3, p: &Vec3, outward: &Vec3) -> Vec3 {
    let mid = (a + b) * 0.5;
    let n = (b - a).cross(&(mid - p)).normalize();
    if n.dot(outward) < 0.0 {
        -n
    } else {
        n
    }
}

fn box_contour(c: &Vec3, h: &Vec3, p: &Vec3) -> Vec<ContourPolyline> {
    let rel = p - c;
    let facing = |axis: usize, sign: f64| sign * rel[axis] > h[axis];
    let mut out = Vec::new();
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for sj in [-1.0, 1.0] {
            for sk in [-1.0, 1.0] {
                if facing(j, sj) == facing(k, sk) {
                    continue;
                }
                let mut base = *c;
                base[j] += sj * h[j];
                base[k] += sk * h[k];
                let mut a = base;
                let mut b = base;
                a[i] -= h[i];
                b[i] += h[i];
                let mut outward = Vec3::zeros();
                outward[j] = sj;
                outward[k] = sk;
                let n = grazing_plane_normal(&a, &b, p, &outward);
                out.push(ContourPolyline { points: vec![a, b], normals: vec![n, n] });
            }
        }
    }
    out
}

fn cylinder_contour(c: &Vec3, r: f64, h: f64, axis: &Vec3, p: &Vec3) -> Vec<ContourPolyline> {
    let rel = p - c;
    let s_cam = rel.dot(axis);
    let q = rel - axis * s_cam;
    let dq = q.norm();
    let (e1, e2) = if dq > 1e-12 {
        let qh = q / dq;
        (qh, axis.cross(&qh))
    } else {
        orthonormal_basis(axis)
    };
    let radial = |th: f64| e1 * th.cos() + e2 * th.sin();
    // lateral directions facing the camera: |theta| < alpha around the camera azimuth
    let alpha = if dq > r { Some((r / dq).acos()) } else { None };

    let mut out = Vec::new();
    if let Some(alpha) = alpha {
        for th in [-alpha, alpha] {
            let m = radial(th);
            out.push(ContourPolyline {
                points: vec![c + m * r - axis * h, c + m * r + axis * h],
                normals: vec![m, m],
            });
        }
    }
    for sign in [-1.0, 1.0] {
        let cap_facing = sign * s_cam > h;
        // rim points where exactly one of cap and lateral faces the camera
        let (start, span) = match (cap_facing, alpha) {
            (true, None) => (0.0, TAU),
            (true, Some(a)) => (a, TAU - 2.0 * a),
            (false, Some(a)) => (-a, 2.0 * a),
            (false, None) => continue,
        };
        let n = ((CIRCLE_SEGMENTS as f64 * span / TAU).ceil() as usize).max(8);
        let mut points = Vec::with_capacity(n + 1);
        let mut normals = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let th = start + span * k as f64 / n as f64;
            let m = radial(th);
            let x = c + m * r + axis * (sign * h);
            let tangent_end = x + axis.cross(&m);
            normals.push(grazing_plane_normal(&x, &tangent_end, p, &(m + axis * sign)));
            points.push(x);
        }
        out.push(ContourPolyline { points, normals });
    }
    out
}

fn mesh_contour(mesh: &TriMesh, p: &Vec3) -> Vec<ContourPolyline> {
    let faces = mesh.faces();
    let facing: Vec<bool> = (0..faces.len())
        .map(|f| mesh.face_cross(f).dot(&(p - mesh.vertices()[faces[f][0]])) > 0.0)
        .collect();
    let mut out = Vec::new();
    let mut edges: Vec<((usize, usize), Vec<usize>)> = mesh.edge_faces().into_iter().collect();
    edges.sort_unstable_by_key(|(e, _)| *e);
    for ((a, b), adj) in edges {
        if adj.len() != 2 || facing[adj[0]] == facing[adj[1]] {
            continue;
        }
        let (va, vb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let mid = (va + vb) * 0.5;
        let Ok(ray) = Ray::new(*p, mid - p) else { continue };
        let reach = (mid - p).norm() * (1.0 - 1e-9);
        let occluded = (0..faces.len()).any(|f| {
            !faces[f].contains(&a)
                && !faces[f].contains(&b)
                && ray_triangle(&ray, &mesh.triangle(f)).is_some_and(|t| t > 0.0 && t < reach)
        });
        if occluded {
            continue;
        }
        let outward = mesh.face_normal(adj[0]) + mesh.face_normal(adj[1]);
        let n = grazing_plane_normal(&va, &vb, p, &outward);
        out.push(ContourPolyline { points: vec![va, vb], normals: vec![n, n] });
    }
    out
}

/// Labels every event `ace` when its pixel is within `tol_px` of the apparent
/// contour at its interpolated pose, `non_ace` otherwise.
pub fn label_events(
    stream: &EventStream,
    traj: &Trajectory,
    intr: &CameraIntrinsics,
    surface: &SceneSurface,
    tol_px: f64,
) -> Result<EventStream> {
    if !(tol_px > 0.0) {
        return Err(Error::Validation(format!("tol_px must be positive, got {tol_px}")));
    }
    let labels: Vec<Label> = stream
        .events()
        .par_iter()
        .map(|e| {
            let pose = traj.interpolate(e.t)?;
            let contour = contour_generator(surface, &pose)?.project(intr);
            Ok(if contour.distance(&e.pixel()) <= tol_px { Label::Ace } else { Label::NonAce })
        })
        .collect::<Result<_>>()?;
    stream.clone().with_labels(&labels)
}
