//! Watertight mesh reconstruction from apparent-contour event streams.
//!
//! Every event whose viewing ray grazes the object (an apparent-contour
//! event, ACE) is traced through a voxel grid with a 3D Bresenham walk.
//! Tangent rays never enter the object, so after enough events the interior
//! is an untouched cavity wrapped in a shell of heavily-counted voxels. The
//! cavity is meshed with Marching Cubes and then pulled onto the
//! high-count shell by a Chamfer + graph-Laplacian refinement.
//!
//! Module map:
//!
//! - [`geometry`]: pinhole camera, poses, trajectory interpolation, rays.
//! - [`events`]: event streams, CSV/binary I/O, event-volume encoding.
//! - [`ace`]: analytic and mesh scenes, contour generators, ACE labeling.
//! - [`carving`]: Bresenham traversal, event and mask carving, extraction.
//! - [`meshing`]: triangle meshes, Marching Cubes, refinement, mesh I/O.
//! - [`metrics`]: Chamfer distance, normal consistency, sampling, k-NN normals.
//! - [`simulator`]: orbits, contour-event emission, silhouette masks.
//! - [`pipeline`]: end-to-end runs, reports and method comparison.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ace;
pub mod carving;
pub mod error;
pub mod events;
pub mod geometry;
pub mod meshing;
pub mod metrics;
pub mod pipeline;
pub mod simulator;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::Vec3;
