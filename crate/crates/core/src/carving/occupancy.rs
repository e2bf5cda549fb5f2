use std::collections::VecDeque;

use super::CarveVolume;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Dense boolean grid sharing the [`CarveVolume`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub voxel_size: f64,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(dims: [usize; 3], origin: Vec3, voxel_size: f64) -> Self {
        Self {
            dims,
            origin,
            voxel_size,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupied[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.occupied[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.occupied
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    pub fn count_occupied(&self) -> usize {
        self.occupied.iter().filter(|&&b| b).count()
    }

    /// Occupied volume in cubic world units.
    pub fn volume(&self) -> f64 {
        self.count_occupied() as f64 * self.voxel_size.powi(3)
    }

    /// Voxel-wise symmetric difference volume against an indicator function
    /// evaluated at voxel centers.
    pub fn symmetric_difference_volume(&self, inside: impl Fn(&Vec3) -> bool) -> f64 {
        let [nx, ny, nz] = self.dims;
        let mut n = 0usize;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if self.get(x, y, z) != inside(&self.voxel_center(x, y, z)) {
                        n += 1;
                    }
                }
            }
        }
        n as f64 * self.voxel_size.powi(3)
    }

    /// 6-connected components of occupied voxels, as linear index lists,
    /// largest first.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.occupied.len()];
        let mut out = Vec::new();
        for start in 0..self.occupied.len() {
            if !self.occupied[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let i = comp[head];
                head += 1;
                for j in neighbors6(self.dims, i) {
                    if self.occupied[j] && !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
            }
            out.push(comp);
        }
        out.sort_by_key(|c| std::cmp::Reverse(c.len()));
        out
    }
}

fn neighbors6(dims: [usize; 3], i: usize) -> impl Iterator<Item = usize> {
    let [nx, ny, nz] = dims;
    let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
    let plane = nx * ny;
    [
        (x > 0).then(|| i - 1),
        (x + 1 < nx).then(|| i + 1),
        (y > 0).then(|| i - nx),
        (y + 1 < ny).then(|| i + nx),
        (z > 0).then(|| i - plane),
        (z + 1 < nz).then(|| i + plane),
    ]
    .into_iter()
    .flatten()
}

/// Components smaller than this fraction of the largest enclosed component are
/// discarded as pockets of exterior space sealed off by crossing rays.
const MIN_COMPONENT_FRACTION: f64 = 0.1;

/// Interior cavity of the carved volume.
///
/// Exterior space is flood-filled (6-connected) from every boundary voxel
/// through voxels with `count <= eps_free`; surface voxels (`count > eps_free`)
/// stop the fill. Low-count voxels the fill cannot reach form the enclosed
/// interior. Only components of at least a tenth of the largest one are kept.
pub fn extract_occupancy(vol: &CarveVolume, eps_free: u32) -> Result<OccupancyGrid> {
    let counts = vol.counts();
    let [nx, ny, nz] = vol.dims;
    if vol.max_count() == 0 {
        return Err(Error::ReconstructionFailed("volume has no carved voxels".into()));
    }
    let free = |i: usize| counts[i] <= eps_free;
    let mut outside = vec![false; counts.len()];
    let mut queue = VecDeque::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let on_boundary = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                let i = vol.index(x, y, z);
                if on_boundary && free(i) {
                    outside[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in neighbors6(vol.dims, i) {
            if !outside[j] && free(j) {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }

    let mut grid = OccupancyGrid::empty(vol.dims, vol.origin, vol.voxel_size);
    for (i, (occ, out)) in grid.occupied.iter_mut().zip(&outside).enumerate() {
        *occ = free(i) && !out;
    }
    let components = grid.components();
    let Some(largest) = components.first().map(Vec::len) else {
        return Err(Error::ReconstructionFailed(
            "no enclosed cavity; viewpoint coverage is insufficient".into(),
        ));
    };
    let min_size = (largest as f64 * MIN_COMPONENT_FRACTION).ceil() as usize;
    for comp in components.iter().filter(|c| c.len() < min_size) {
        for &i in comp {
            grid.occupied[i] = false;
        }
    }
    Ok(grid)
}
