//! Synthetic data: camera orbits, kinematic contour-event emission and
//! ground-truth silhouette masks.
//!
//! Events are produced by sampling the moving apparent contour directly
//! rather than by simulating intensity changes, so every contour event is an
//! ACE by construction.

use std::f64::consts::TAU;

use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ace::{contour_generator, SceneSurface};
use crate::carving::Mask;
use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Label};
use crate::geometry::{slerp, CameraIntrinsics, Pose, Ray, Trajectory, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitKind {
    /// One revolution in the world xy-plane around the z axis.
    Circular,
    /// Quarter arcs through +x, +y, +z, -x, -y, -z and back to +x.
    Octahedral,
    /// Great-circle arcs through seeded uniform directions on the sphere.
    RandomSphere,
}

/// Camera path around a target point, always looking at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub kind: OrbitKind,
    pub radius: f64,
    /// Seconds.
    pub duration: f64,
    /// Pose samples per second.
    pub pose_rate: f64,
    pub look_at: [f64; 3],
    /// Waypoint seed for `random_sphere`.
    pub seed: u64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            kind: OrbitKind::RandomSphere,
            radius: 3.0,
            duration: 10.0,
            pose_rate: 100.0,
            look_at: [0.0; 3],
            seed: 0,
        }
    }
}

/// Waypoints of a `random_sphere` orbit.
const RANDOM_WAYPOINTS: usize = 24;

impl OrbitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Validation(format!("orbit radius must be positive, got {}", self.radius)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Validation(format!("orbit duration must be positive, got {}", self.duration)));
        }
        if !(self.pose_rate >= 100.0 && self.pose_rate.is_finite()) {
            return Err(Error::Validation(format!("pose rate must be at least 100 Hz, got {}", self.pose_rate)));
        }
        Ok(())
    }

    /// Unit directions from the target visited in order (empty for circular orbits).
    fn waypoints(&self) -> Vec<Vec3> {
        match self.kind {
            OrbitKind::Circular => Vec::new(),
            OrbitKind::Octahedral => vec![
                Vec3::x(),
                Vec3::y(),
                Vec3::z(),
                -Vec3::x(),
                -Vec3::y(),
                -Vec3::z(),
                Vec3::x(),
            ],
            OrbitKind::RandomSphere => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut out: Vec<Vec3> = Vec::with_capacity(RANDOM_WAYPOINTS);
                while out.len() < RANDOM_WAYPOINTS {
                    let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                    if v.norm() < 1e-9 {
                        continue;
                    }
                    let v = v.normalize();
                    // a geodesic between near-antipodal points is ill-defined
                    if out.last().is_some_and(|prev| prev.dot(&v) < -0.9) {
                        continue;
                    }
                    out.push(v);
                }
                out
            }
        }
    }
}

/// Direction from the target at normalized time `s` in `[0, 1]`.
fn orbit_direction(kind: OrbitKind, waypoints: &[Vec3], arc_ends: &[f64], s: f64) -> Vec3 {
    if kind == OrbitKind::Circular {
        let a = TAU * s;
        return Vec3::new(a.cos(), a.sin(), 0.0);
    }
    let total = *arc_ends.last().expect("at least one arc");
    let target = s * total;
    let k = arc_ends.partition_point(|&e| e <= target).min(arc_ends.len() - 1);
    let start = if k == 0 { 0.0 } else { arc_ends[k - 1] };
    let local = ((target - start) / (arc_ends[k] - start)).clamp(0.0, 1.0);
    let (a, b) = (waypoints[k], waypoints[k + 1]);
    let q = UnitQuaternion::rotation_between(&a, &b).unwrap_or_else(UnitQuaternion::identity);
    slerp(&UnitQuaternion::identity(), &q, local) * a
}

/// Samples an orbit at `pose_rate`; every pose looks at the target and the
/// image-up vector is carried over from the previous pose.
pub fn make_trajectory(spec: &OrbitSpec) -> Result<Trajectory> {
    spec.validate()?;
    let n = (spec.duration * spec.pose_rate).round().max(2.0) as usize;
    let target = Vec3::from(spec.look_at);
    let waypoints = spec.waypoints();
    let mut arc_ends = Vec::new();
    let mut acc = 0.0;
    for w in waypoints.windows(2) {
        acc += w[0].angle(&w[1]);
        arc_ends.push(acc);
    }
    let mut samples = Vec::with_capacity(n);
    let mut up: Option<Vec3> = None;
    for k in 0..n {
        let t = k as f64 / spec.pose_rate;
        let s = k as f64 / n as f64;
        let dir = orbit_direction(spec.kind, &waypoints, &arc_ends, s);
        let eye = target + dir * spec.radius;
        let hint = up.unwrap_or_else(|| if dir.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() });
        let pose = Pose::look_at(eye, target, hint)?;
        up = Some(pose.up());
        samples.push((t, pose));
    }
    Trajectory::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    Poisson,
    Uniform,
}

/// Event-generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitterSpec {
    /// Contour events per second.
    pub event_rate: f64,
    /// Standard deviation of Gaussian pixel noise.
    pub jitter_px: f64,
    /// Uniform background events per second.
    pub clutter_rate: f64,
    pub seed: u64,
    pub timing: Timing,
}

impl Default for EmitterSpec {
    fn default() -> Self {
        Self {
            event_rate: 20_000.0,
            jitter_px: 0.0,
            clutter_rate: 0.0,
            seed: 0,
            timing: Timing::Poisson,
        }
    }
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [(self.event_rate, "event_rate"), (self.jitter_px, "jitter_px"), (self.clutter_rate, "clutter_rate")] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{what} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Event times over `[t0, t1]` at `rate`, on the sensor's microsecond clock.
fn emission_times(rate: f64, t0: f64, t1: f64, timing: Timing, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let span = t1 - t0;
    if rate <= 0.0 || span <= 0.0 {
        return Vec::new();
    }
    let raw: Vec<f64> = match timing {
        Timing::Uniform => {
            let n = (rate * span).round() as usize;
            (0..n).map(|k| t0 + (k as f64 + 0.5) * span / n as f64).collect()
        }
        Timing::Poisson => {
            let exp = Exp::new(rate).expect("positive rate");
            let mut out = Vec::new();
            let mut t = t0 + exp.sample(rng);
            while t <= t1 {
                out.push(t);
                t += exp.sample(rng);
            }
            out
        }
    };
    raw.into_iter().map(|t| ((t * 1e6).round() / 1e6).clamp(t0, t1)).collect()
}

/// Moves a point on the contour to the pixel grid: the coordinate along the
/// contour's dominant image direction is rounded first and the point slid
/// along the tangent to it, then the other coordinate is rounded. The result
/// is within half a pixel of the contour's tangent line.
fn snap_to_pixel(q: &Vec2, tangent: &Vec2) -> Vec2 {
    if tangent.x.abs() >= tangent.y.abs() {
        let x = q.x.round();
        let y = q.y + (x - q.x) / tangent.x * tangent.y;
        Vec2::new(x, y.round())
    } else {
        let y = q.y.round();
        let x = q.x + (y - q.y) / tangent.y * tangent.x;
        Vec2::new(x.round(), y)
    }
}

fn random_polarity(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Contour events (label `ace`) sampled uniformly along the projected contour
/// at each emission time, plus uniform clutter events (label `non_ace`).
/// Polarity is random. Fails listing the timestamps at which the contour
/// leaves the image.
pub fn emit_contour_events(
    surface: &SceneSurface,
    traj: &Trajectory,
    intr: &CameraIntrinsics,
    spec: &EmitterSpec,
) -> Result<EventStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clutter_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    clutter_rng.set_stream(1);
    let (t0, t1) = (traj.start(), traj.end());
    let (w, h) = (intr.width as f64, intr.height as f64);

    let mut events = Vec::new();
    let mut out_of_frustum = Vec::new();
    for t in emission_times(spec.event_rate, t0, t1, spec.timing, &mut rng) {
        let pose = traj.interpolate(t)?;
        let contour = contour_generator(surface, &pose)?.project(intr);
        let inside = |p: &Vec2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0;
        let n_points = contour.points().count();
        if n_points == 0 || contour.points().any(|p| !inside(p)) {
            out_of_frustum.push(t);
            continue;
        }
        let Some((q, tangent)) = contour.sample(rng.random::<f64>()) else {
            out_of_frustum.push(t);
            continue;
        };
        let noisy = if spec.jitter_px > 0.0 {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            q + Vec2::new(nx, ny) * spec.jitter_px
        } else {
            q
        };
        let px = snap_to_pixel(&noisy, &tangent);
        let p = random_polarity(&mut rng);
        if px.x < 0.0 || px.y < 0.0 || px.x > w - 1.0 || px.y > h - 1.0 {
            continue;
        }
        events.push(Event::new(px.x as u16, px.y as u16, t, p).with_label(Label::Ace));
    }
    if !out_of_frustum.is_empty() {
        return Err(Error::OutOfFrustum(out_of_frustum));
    }
    for t in emission_times(spec.clutter_rate, t0, t1, Timing::Poisson, &mut clutter_rng) {
        let x = clutter_rng.random_range(0..intr.width) as u16;
        let y = clutter_rng.random_range(0..intr.height) as u16;
        let p = random_polarity(&mut clutter_rng);
        events.push(Event::new(x, y, t, p).with_label(Label::NonAce));
    }
    EventStream::from_unsorted(events, *intr)
}

/// One ground-truth silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskView {
    pub t: f64,
    pub pose: Pose,
    pub mask: Mask,
}

/// `n_views` masks at times `start + k * duration / n_views`. A pixel is set
/// when the ray through its center hits the surface.
pub fn render_masks(surface: &SceneSurface, traj: &Trajectory, intr: &CameraIntrinsics, n_views: usize) -> Result<Vec<MaskView>> {
    if n_views < 2 {
        return Err(Error::Validation(format!("need at least 2 mask views, got {n_views}")));
    }
    let span = traj.end() - traj.start();
    let mut out = Vec::with_capacity(n_views);
    let mut out_of_frustum = Vec::new();
    for k in 0..n_views {
        let t = traj.start() + span * k as f64 / n_views as f64;
        let pose = traj.interpolate(t)?;
        if surface.contains(&pose.center()) {
            return Err(Error::Domain("camera center is inside the surface".into()));
        }
        let mask = match surface {
            SceneSurface::Mesh(m) => rasterize_mesh(m, &pose, intr),
            _ => Mask::from_fn(intr.width, intr.height, |x, y| {
                let dir = intr.backproject(&Vec2::new(x as f64, y as f64)).expect("pixel on sensor");
                let ray = Ray::new(pose.center(), pose.rotation * dir).expect("unit direction");
                surface.ray_intersect(&ray).is_some()
            }),
        };
        let (w, h) = (intr.width, intr.height);
        let touches_border = (0..w).any(|x| mask.get(x, 0) || mask.get(x, h - 1)) || (0..h).any(|y| mask.get(0, y) || mask.get(w - 1, y));
        if touches_border {
            out_of_frustum.push(t);
        }
        out.push(MaskView { t, pose, mask });
    }
    if !out_of_frustum.is_empty() {
        return Err(Error::OutOfFrustum(out_of_frustum));
    }
    Ok(out)
}

/// Pixel centers covered by any projected triangle; for a closed mesh in
/// front of the camera this equals the ray-cast silhouette.
fn rasterize_mesh(mesh: &crate::meshing::TriMesh, pose: &Pose, intr: &CameraIntrinsics) -> Mask {
    let mut mask = Mask::filled(intr.width, intr.height, false);
    for f in 0..mesh.num_faces() {
        let tri = mesh.triangle(f);
        let proj: Option<Vec<Vec2>> = tri.iter().map(|v| intr.project(&pose.to_camera(v))).collect();
        let Some(p) = proj else { continue };
        let lo = p.iter().fold(Vec2::repeat(f64::INFINITY), |a, b| a.inf(b));
        let hi = p.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, b| a.sup(b));
        let x0 = lo.x.ceil().max(0.0) as i64;
        let y0 = lo.y.ceil().max(0.0) as i64;
        let x1 = hi.x.floor().min(intr.width as f64 - 1.0) as i64;
        let y1 = hi.y.floor().min(intr.height as f64 - 1.0) as i64;
        let edge = |a: &Vec2, b: &Vec2, q: &Vec2| (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x);
        let area = edge(&p[0], &p[1], &p[2]);
        if area == 0.0 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let q = Vec2::new(x as f64, y as f64);
                let w = [edge(&p[1], &p[2], &q), edge(&p[2], &p[0], &q), edge(&p[0], &p[1], &q)];
                if w.iter().all(|&v| v * area >= 0.0) {
                    mask.set(x as u32, y as u32, true);
                }
            }
        }
    }
    mask
}
