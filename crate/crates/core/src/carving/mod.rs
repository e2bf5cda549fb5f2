//! Per-event ray carving into an integer accumulation volume, the
//! frame-based mask baseline, and extraction of occupancy and
//! high-confidence surface points.

mod bresenham;
mod mask;
mod occupancy;
mod volume_io;

pub use bresenham::bresenham3d;
pub use mask::Mask;
pub use occupancy::{extract_occupancy, OccupancyGrid};
pub use volume_io::{read_volume, write_volume, VOLUME_MAGIC};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStream, Label};
use crate::geometry::{event_ray, CameraIntrinsics, Pose, Ray, Vec3};

/// Dense `u32` traversal counts plus the number of rays traced.
///
/// Voxel `(x, y, z)` spans `origin + [x, x+1) * voxel_size` (etc.) and is
/// stored at linear index `(z * ny + y) * nx + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarveVolume {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub voxel_size: f64,
    counts: Vec<u32>,
    /// Rays shot, including those that missed the grid.
    pub ops: u64,
}

/// Bookkeeping from carving an event stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveStats {
    pub carved: u64,
    pub skipped_label: u64,
    pub skipped_out_of_range: u64,
}

impl std::ops::AddAssign for CarveStats {
    fn add_assign(&mut self, rhs: Self) {
        self.carved += rhs.carved;
        self.skipped_label += rhs.skipped_label;
        self.skipped_out_of_range += rhs.skipped_out_of_range;
    }
}

impl CarveVolume {
    pub fn new(dims: [usize; 3], origin: Vec3, voxel_size: f64) -> Result<Self> {
        if dims.contains(&0) || !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::Validation(format!(
                "invalid grid dims {dims:?} / voxel size {voxel_size}"
            )));
        }
        Ok(Self {
            dims,
            origin,
            voxel_size,
            counts: vec![0; dims[0] * dims[1] * dims[2]],
            ops: 0,
        })
    }

    /// Cubic grid of `dim^3` voxels centered on the box, with side `padding` times its largest extent.
    pub fn around(lo: Vec3, hi: Vec3, dim: usize, padding: f64) -> Result<Self> {
        let side = (hi - lo).max() * padding;
        let center = (lo + hi) * 0.5;
        Self::new([dim; 3], center - Vec3::repeat(side / 2.0), side / dim as f64)
    }

    pub(crate) fn from_parts(dims: [usize; 3], origin: Vec3, voxel_size: f64, counts: Vec<u32>, ops: u64) -> Result<Self> {
        let mut vol = Self::new(dims, origin, voxel_size)?;
        if counts.len() != vol.counts.len() {
            return Err(Error::Validation(format!(
                "{} counts for a {dims:?} grid",
                counts.len()
            )));
        }
        vol.counts = counts;
        vol.ops = ops;
        Ok(vol)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.counts[self.index(x, y, z)]
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_size
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Empty grid with the same geometry.
    pub fn zeroed_like(&self) -> Self {
        Self {
            dims: self.dims,
            origin: self.origin,
            voxel_size: self.voxel_size,
            counts: vec![0; self.counts.len()],
            ops: 0,
        }
    }

    /// Ray in voxel units: origin relative to the grid corner, same direction.
    pub fn to_voxel_space(&self, ray: &Ray) -> (Vec3, Vec3) {
        ((ray.origin - self.origin) / self.voxel_size, ray.direction)
    }

    pub fn traverse(&self, ray: &Ray) -> Result<Vec<[usize; 3]>> {
        let (o, d) = self.to_voxel_space(ray);
        bresenham3d(&o, &d, self.dims)
    }

    /// Increments every voxel on the ray's Bresenham path and counts one op.
    /// A ray that misses the grid still counts.
    pub fn carve_event(&mut self, ray: &Ray) -> Result<()> {
        let (o, d) = self.to_voxel_space(ray);
        let mut idx = Vec::with_capacity(self.dims.iter().sum());
        bresenham::walk(&o, &d, self.dims, |[x, y, z]| idx.push((z * self.dims[1] + y) * self.dims[0] + x))?;
        if let Some(&i) = idx.iter().find(|&&i| self.counts[i] == u32::MAX) {
            return Err(Error::CountOverflow(i));
        }
        for i in idx {
            self.counts[i] += 1;
        }
        self.ops += 1;
        Ok(())
    }

    /// Carves every ace-labeled event (every event when `use_labels` is false).
    /// Events outside the trajectory are skipped and counted.
    pub fn carve_event_stream(
        &mut self,
        stream: &EventStream,
        traj: &crate::geometry::Trajectory,
        intr: &CameraIntrinsics,
        use_labels: bool,
    ) -> Result<CarveStats> {
        let mut stats = CarveStats::default();
        for e in stream.events() {
            if use_labels && e.label != Label::Ace {
                stats.skipped_label += 1;
                continue;
            }
            if !traj.contains_time(e.t) {
                stats.skipped_out_of_range += 1;
                continue;
            }
            let ray = event_ray(e, traj, intr)?;
            self.carve_event(&ray)?;
            stats.carved += 1;
        }
        if stats.skipped_out_of_range > 0 {
            log::warn!(
                "{} events outside the trajectory time range were skipped",
                stats.skipped_out_of_range
            );
        }
        Ok(stats)
    }

    /// Same result as [`carve_event_stream`](Self::carve_event_stream), with the
    /// stream split into `partitions` chunks carved on private grids and summed.
    pub fn carve_event_stream_parallel(
        &mut self,
        stream: &EventStream,
        traj: &crate::geometry::Trajectory,
        intr: &CameraIntrinsics,
        use_labels: bool,
        partitions: usize,
    ) -> Result<CarveStats> {
        let partitions = partitions.max(1);
        let chunk = stream.len().div_ceil(partitions).max(1);
        let parts: Vec<(CarveVolume, CarveStats)> = stream
            .events()
            .par_chunks(chunk)
            .map(|events| {
                let mut vol = self.zeroed_like();
                let sub = EventStream::new(events.to_vec(), *stream.sensor())?;
                let stats = vol.carve_event_stream(&sub, traj, intr, use_labels)?;
                Ok((vol, stats))
            })
            .collect::<Result<_>>()?;
        let mut stats = CarveStats::default();
        for (vol, s) in parts {
            self.merge(&vol)?;
            stats += s;
        }
        Ok(stats)
    }

    /// Adds another volume with identical geometry, counts and ops.
    pub fn merge(&mut self, other: &CarveVolume) -> Result<()> {
        if other.dims != self.dims || other.origin != self.origin || other.voxel_size != self.voxel_size {
            return Err(Error::Validation("merging volumes with different geometry".into()));
        }
        for (i, (a, b)) in self.counts.iter_mut().zip(&other.counts).enumerate() {
            *a = a.checked_add(*b).ok_or(Error::CountOverflow(i))?;
        }
        self.ops += other.ops;
        Ok(())
    }

    /// Frame baseline: one ray per silhouette-boundary pixel. Returns the rays traced.
    pub fn carve_mask(&mut self, mask: &Mask, pose: &Pose, intr: &CameraIntrinsics) -> Result<u64> {
        if mask.width != intr.width || mask.height != intr.height {
            return Err(Error::Validation(format!(
                "mask {}x{} does not match sensor {}x{}",
                mask.width, mask.height, intr.width, intr.height
            )));
        }
        let mut traced = 0;
        for (x, y) in mask.contour_pixels() {
            let dir = intr.backproject(&crate::geometry::Vec2::new(x as f64, y as f64))?;
            let ray = Ray::new(pose.center(), pose.rotation * dir)?;
            self.carve_event(&ray)?;
            traced += 1;
        }
        Ok(traced)
    }

    /// Count at the given percentile (nearest rank) of the non-zero counts.
    pub fn nonzero_percentile(&self, percentile: f64) -> Option<u32> {
        let mut nz: Vec<u32> = self.counts.iter().copied().filter(|&c| c > 0).collect();
        if nz.is_empty() {
            return None;
        }
        nz.sort_unstable();
        let p = percentile.clamp(0.0, 100.0);
        let rank = ((p / 100.0) * nz.len() as f64).ceil() as usize;
        Some(nz[rank.saturating_sub(1).min(nz.len() - 1)])
    }

    /// Voxel centers whose count exceeds `eps_v`.
    pub fn extract_high_confidence(&self, eps_v: u32) -> SurfacePointSet {
        let points = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > eps_v)
            .map(|(i, _)| {
                let [x, y, z] = self.coords(i);
                self.voxel_center(x, y, z)
            })
            .collect();
        SurfacePointSet { points }
    }
}

/// High-confidence surface points: centers of heavily traversed voxels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<Vec3>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
