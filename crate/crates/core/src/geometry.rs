//! Camera model, rigid poses, trajectory interpolation and ray generation.
//!
//! Conventions: the camera frame has +x right, +y down and +z along the
//! optical axis. A [`Pose`] maps camera coordinates into the world frame.
//! Pixel coordinates are continuous with integer values at pixel centers.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Event;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

const UNIT_TOL: f64 = 1e-9;

/// Ideal pinhole intrinsics. No distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Is the continuous pixel coordinate inside `[0, width) x [0, height)`?
    pub fn contains(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    /// Unit viewing direction (camera frame) of a pixel.
    pub fn backproject(&self, pixel: &Vec2) -> Result<Vec3> {
        if !self.contains(pixel) {
            return Err(Error::PixelOutOfBounds {
                x: pixel.x,
                y: pixel.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Vec3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
        .normalize())
    }

    /// Forward pinhole map. `None` for points on or behind the image plane.
    pub fn project(&self, p_cam: &Vec3) -> Option<Vec2> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some(Vec2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }
}

/// World-from-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    /// Camera center in world coordinates.
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vec3::zeros())
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    pub fn to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation * p_cam + self.translation
    }

    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p_world - self.translation))
    }

    /// Camera at `eye` looking at `target`, with image-up as close to `up` as possible.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Domain("look_at: eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::Domain(
                "look_at: up vector parallel to viewing direction".into(),
            ));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        Ok(Self::new(UnitQuaternion::from_rotation_matrix(&rot), eye))
    }

    /// Image-up direction (camera -y) in world coordinates.
    pub fn up(&self) -> Vec3 {
        -(self.rotation * Vec3::y())
    }
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let a = q0.coords;
    let mut b = q1.coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        // nearly identical: normalized lerp is exact to machine precision here
        a * (1.0 - s) + b * s
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let sin_theta = theta.sin();
        a * (((1.0 - s) * theta).sin() / sin_theta) + b * ((s * theta).sin() / sin_theta)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(coords))
}

/// Time-indexed camera poses. Timestamps are seconds, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Pose)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation(format!(
                "trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Validation(format!(
                    "trajectory timestamps not strictly increasing at t={}",
                    w[1].0
                )));
            }
        }
        for (t, pose) in &samples {
            if !t.is_finite() || (pose.rotation.coords.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::Validation(format!("invalid pose at t={t}")));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// Linear interpolation of the camera center, slerp of the rotation.
    /// Exact at sample timestamps; no extrapolation.
    pub fn interpolate(&self, t: f64) -> Result<Pose> {
        if !self.contains_time(t) {
            return Err(Error::Extrapolation {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        // first sample with timestamp > t
        let hi = self.samples.partition_point(|(ts, _)| *ts <= t);
        if hi == 0 {
            return Ok(self.samples[0].1);
        }
        let (t0, p0) = &self.samples[hi - 1];
        if *t0 == t || hi == self.samples.len() {
            return Ok(*p0);
        }
        let (t1, p1) = &self.samples[hi];
        let s = (t - t0) / (t1 - t0);
        Ok(Pose::new(
            slerp(&p0.rotation, &p1.rotation, s),
            p0.translation.lerp(&p1.translation, s),
        ))
    }

    /// Read a TUM-format trajectory: `t tx ty tz qx qy qz qw` per line.
    pub fn read_tum(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut samples = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, format!("{e}")))?;
            if vals.len() != 8 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 8 fields, found {}", vals.len()),
                ));
            }
            let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            if q.norm() < 1e-12 {
                return Err(Error::parse(path, i + 1, "zero quaternion"));
            }
            let pose = Pose::new(
                UnitQuaternion::from_quaternion(q),
                Vec3::new(vals[1], vals[2], vals[3]),
            );
            samples.push((vals[0], pose));
        }
        Self::new(samples)
    }

    pub fn write_tum(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("# t tx ty tz qx qy qz qw\n");
        for (t, pose) in &self.samples {
            let p = pose.translation;
            let q = pose.rotation.coords; // (i, j, k, w)
            // {:?} prints the shortest representation that parses back exactly
            let _ = writeln!(
                out,
                "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                t, p.x, p.y, p.z, q.x, q.y, q.z, q.w
            );
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// World-frame half-line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain("ray direction must be non-zero".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Perpendicular distance from `p` to the infinite line carrying the ray.
    pub fn line_distance(&self, p: &Vec3) -> f64 {
        let v = p - self.origin;
        (v - self.direction * v.dot(&self.direction)).norm()
    }
}

/// Viewing ray of an event at its interpolated pose.
pub fn event_ray(e: &Event, traj: &Trajectory, intr: &CameraIntrinsics) -> Result<Ray> {
    let pose = traj.interpolate(e.t)?;
    let dir_cam = intr.backproject(&e.pixel())?;
    Ray::new(pose.center(), pose.rotation * dir_cam)
}
