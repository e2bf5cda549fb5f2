//! 3D Bresenham traversal of a ray through a voxel grid.
//!
//! Voxel `(i, j, k)` covers `[i, i+1) x [j, j+1) x [k, k+1)` in voxel units.
//! The ray is clipped to the grid, then walked one slab at a time along its
//! dominant axis; at each slab the minor axes take the voxel containing the
//! ray point at the slab center. Consecutive voxels therefore advance exactly
//! one step along the dominant axis and at most one step along each other
//! axis, and every visited voxel contains a point of the ray.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Visited voxels from grid entry to exit. Empty when the ray misses.
pub fn bresenham3d(origin: &Vec3, direction: &Vec3, dims: [usize; 3]) -> Result<Vec<[usize; 3]>> {
    let mut out = Vec::new();
    walk(origin, direction, dims, |v| out.push(v))?;
    Ok(out)
}

/// Parameter interval `[t_enter, t_exit]`, `t >= 0`, where the ray is inside the grid box.
pub(crate) fn clip_to_grid(origin: &Vec3, direction: &Vec3, dims: [usize; 3]) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let hi = dims[a] as f64;
        if direction[a] == 0.0 {
            if origin[a] < 0.0 || origin[a] > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / direction[a];
        let (mut ta, mut tb) = ((0.0 - origin[a]) * inv, (hi - origin[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t0 < t1).then_some((t0, t1))
}

pub(crate) fn walk(
    origin: &Vec3,
    direction: &Vec3,
    dims: [usize; 3],
    mut visit: impl FnMut([usize; 3]),
) -> Result<()> {
    if !(direction.norm() > 0.0) || !direction.iter().all(|c| c.is_finite()) {
        return Err(Error::Domain("bresenham3d: zero or non-finite direction".into()));
    }
    if dims.contains(&0) {
        return Ok(());
    }
    let Some((t_enter, t_exit)) = clip_to_grid(origin, direction, dims) else {
        return Ok(());
    };
    let major = direction.iamax();
    let dm = direction[major];
    let m_enter = origin[major] + t_enter * dm;
    let m_exit = origin[major] + t_exit * dm;
    let (lo, hi) = if m_enter <= m_exit { (m_enter, m_exit) } else { (m_exit, m_enter) };
    let n_major = dims[major] as i64;
    let first = (lo.floor() as i64).clamp(0, n_major - 1);
    // a segment ending exactly on a slab boundary does not enter the next slab
    let last = ((hi.ceil() as i64) - 1).max(first).clamp(0, n_major - 1);

    let mut emit = |slab: i64| {
        let tc = ((slab as f64 + 0.5 - origin[major]) / dm).clamp(t_enter, t_exit);
        let p = origin + direction * tc;
        let mut v = [0usize; 3];
        for a in 0..3 {
            v[a] = if a == major {
                slab as usize
            } else {
                (p[a].floor() as i64).clamp(0, dims[a] as i64 - 1) as usize
            };
        }
        visit(v);
    };
    if dm > 0.0 {
        (first..=last).for_each(&mut emit);
    } else {
        (first..=last).rev().for_each(&mut emit);
    }
    Ok(())
}
