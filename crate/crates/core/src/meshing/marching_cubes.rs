use std::collections::HashMap;

use super::mc_tables::{CORNERS, EDGES, TRI_TABLE};
use super::TriMesh;
use crate::carving::OccupancyGrid;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Marching Cubes on the 0.5 level of the binary occupancy field.
///
/// Samples sit at voxel centers and the grid is padded with one empty layer
/// on every side, so any occupancy yields a closed surface. Vertices land on
/// sample-edge midpoints and are shared between neighboring cells. Faces
/// are oriented outward.
pub fn marching_cubes(grid: &OccupancyGrid) -> Result<TriMesh> {
    if grid.count_occupied() == 0 {
        return Err(Error::Domain("marching cubes on an empty occupancy grid".into()));
    }
    let [nx, ny, nz] = grid.dims;
    let sample = |x: i64, y: i64, z: i64| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < nx
            && (y as usize) < ny
            && (z as usize) < nz
            && grid.get(x as usize, y as usize, z as usize)
    };
    let center = |p: [i64; 3]| -> Vec3 {
        grid.origin + Vec3::new(p[0] as f64 + 0.5, p[1] as f64 + 0.5, p[2] as f64 + 0.5) * grid.voxel_size
    };

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // (lower sample point, axis) -> vertex index
    let mut edge_vertex: HashMap<([i64; 3], usize), usize> = HashMap::new();

    for z in -1..nz as i64 {
        for y in -1..ny as i64 {
            for x in -1..nx as i64 {
                let mut case = 0usize;
                for (i, c) in CORNERS.iter().enumerate() {
                    if !sample(x + c[0] as i64, y + c[1] as i64, z + c[2] as i64) {
                        case |= 1 << i;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut tri = [0usize; 3];
                for (k, &edge) in row.iter().take_while(|&&e| e >= 0).enumerate() {
                    let [ca, cb] = EDGES[edge as usize];
                    let pa = corner(x, y, z, ca);
                    let pb = corner(x, y, z, cb);
                    let (lo, hi) = if pa <= pb { (pa, pb) } else { (pb, pa) };
                    let axis = (0..3).find(|&a| lo[a] != hi[a]).expect("cell edge spans one axis");
                    let v = *edge_vertex.entry((lo, axis)).or_insert_with(|| {
                        vertices.push((center(lo) + center(hi)) * 0.5);
                        vertices.len() - 1
                    });
                    tri[k % 3] = v;
                    if k % 3 == 2 {
                        faces.push(tri);
                    }
                }
            }
        }
    }

    let mut mesh = TriMesh::new(vertices, faces)?;
    if mesh.signed_volume() < 0.0 {
        mesh.flip_orientation();
    }
    Ok(mesh)
}

fn corner(x: i64, y: i64, z: i64, c: usize) -> [i64; 3] {
    let o = CORNERS[c];
    [x + o[0] as i64, y + o[1] as i64, z + o[2] as i64]
}
