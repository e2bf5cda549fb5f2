//! Volume file: 16-byte magic, `u32` dims, `f64` origin and voxel size,
//! `u64` ops, then `u32` counts in x-fastest order. All little-endian.

use std::path::Path;

use super::CarveVolume;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const VOLUME_MAGIC: &[u8; 16] = b"EVAC3D-VOL-v1\0\0\0";
const HEADER_LEN: usize = 16 + 3 * 4 + 3 * 8 + 8 + 8;

pub fn write_volume(vol: &CarveVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * vol.counts().len());
    out.extend_from_slice(VOLUME_MAGIC);
    for d in vol.dims {
        let d = u32::try_from(d).map_err(|_| Error::Validation(format!("grid dim {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for c in vol.origin.iter() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.extend_from_slice(&vol.voxel_size.to_le_bytes());
    out.extend_from_slice(&vol.ops.to_le_bytes());
    for c in vol.counts() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<CarveVolume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..16] != VOLUME_MAGIC {
        return Err(Error::parse(path, 0, "not a volume file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = [u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize];
    let origin = Vec3::new(f64_at(28), f64_at(36), f64_at(44));
    let voxel_size = f64_at(52);
    let ops = u64::from_le_bytes(bytes[60..68].try_into().unwrap());
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let body = &bytes[HEADER_LEN..];
    if n.is_none_or(|n| body.len() != 4 * n) {
        return Err(Error::parse(path, 0, format!("body size does not match dims {dims:?}")));
    }
    let counts = body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    CarveVolume::from_parts(dims, origin, voxel_size, counts, ops)
}
