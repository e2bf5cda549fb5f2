//! Global refinement: pull mesh vertices onto high-confidence surface points
//! while a graph-Laplacian edge-length term keeps the mesh regular.
//!
//! ```text
//! L = l1/|P| * sum_{i : d_i < eps_d} d_i^2
//!   + l2/|P| * sum_i 1/|N(i)| * sum_{j in N(i)} |p_j - p_i|
//! ```
//!
//! `d_i` is the distance from vertex `i` to its nearest surface point. The
//! deformation is a free translation per vertex, optimized with Adam.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Chamfer clamping radius in meters.
    pub eps_d: f64,
    pub iters: usize,
    /// Adam learning rate, meters per step.
    pub step_size: f64,
}

impl RefineConfig {
    /// Defaults scaled to the carving grid.
    pub fn for_scene(voxel_size: f64, scene_diameter: f64) -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            eps_d: 3.0 * voxel_size,
            iters: 200,
            step_size: 1e-3 * scene_diameter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.eps_d > 0.0
            && self.step_size > 0.0
            && [self.lambda1, self.lambda2, self.eps_d, self.step_size]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid refinement config {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub mesh: TriMesh,
    /// Loss before each step, then the final loss.
    pub loss_trace: Vec<f64>,
}

/// Loss and its gradient with respect to every vertex position.
///
/// Nearest-point assignments are held fixed for the derivative; zero-length
/// edges contribute a zero subgradient.
pub fn refine_loss(mesh: &TriMesh, surf: &[Vec3], cfg: &RefineConfig) -> Result<(f64, Vec<Vec3>)> {
    if surf.is_empty() {
        return Err(Error::Domain("refinement needs at least one surface point".into()));
    }
    let tree = KdTree::new(surf);
    Ok(loss_and_grad(mesh.vertices(), mesh.adjacency(), &tree, cfg))
}

fn loss_and_grad(
    verts: &[Vec3],
    adjacency: &[Vec<usize>],
    tree: &KdTree,
    cfg: &RefineConfig,
) -> (f64, Vec<Vec3>) {
    let n = verts.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let inv_n = 1.0 / n as f64;
    let eps_sq = cfg.eps_d * cfg.eps_d;
    // per-vertex Laplacian weight l2 / (|P| |N(i)|)
    let weight = |i: usize| -> f64 {
        let deg = adjacency[i].len();
        if deg == 0 {
            0.0
        } else {
            cfg.lambda2 * inv_n / deg as f64
        }
    };

    let per_vertex: Vec<(f64, Vec3)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = verts[i];
            let mut loss = 0.0;
            let mut grad = Vec3::zeros();

            let nn = tree.nearest(&p).expect("non-empty tree");
            if nn.dist_sq < eps_sq {
                loss += cfg.lambda1 * inv_n * nn.dist_sq;
                grad += (p - tree.point(nn.index)) * (2.0 * cfg.lambda1 * inv_n);
            }

            let wi = weight(i);
            for &j in &adjacency[i] {
                let d = verts[j] - p;
                let len = d.norm();
                loss += wi * len;
                if len > 0.0 {
                    // i appears in both its own sum and in each neighbor's
                    grad -= d * ((wi + weight(j)) / len);
                }
            }
            (loss, grad)
        })
        .collect();

    let loss = per_vertex.iter().map(|(l, _)| l).sum();
    let grad = per_vertex.into_iter().map(|(_, g)| g).collect();
    (loss, grad)
}

/// Adam on per-vertex translations for `cfg.iters` steps. Connectivity is unchanged.
pub fn refine_mesh(mesh: &TriMesh, surf: &[Vec3], cfg: &RefineConfig) -> Result<RefineResult> {
    cfg.validate()?;
    if surf.is_empty() {
        return Err(Error::Domain("refinement needs at least one surface point".into()));
    }
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let tree = KdTree::new(surf);
    let mut verts = mesh.vertices().to_vec();
    let mut m = vec![Vec3::zeros(); verts.len()];
    let mut v = vec![Vec3::zeros(); verts.len()];
    let mut trace = Vec::with_capacity(cfg.iters + 1);

    for step in 1..=cfg.iters {
        let (loss, grad) = loss_and_grad(&verts, mesh.adjacency(), &tree, cfg);
        check_finite(loss, step)?;
        trace.push(loss);
        let bc1 = 1.0 - BETA1.powi(step as i32);
        let bc2 = 1.0 - BETA2.powi(step as i32);
        verts
            .par_iter_mut()
            .zip(m.par_iter_mut())
            .zip(v.par_iter_mut())
            .zip(grad.par_iter())
            .for_each(|(((p, m), v), g)| {
                *m = *m * BETA1 + g * (1.0 - BETA1);
                *v = *v * BETA2 + g.component_mul(g) * (1.0 - BETA2);
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= m_hat.zip_map(&v_hat, |a, b| a / (b.sqrt() + EPS)) * cfg.step_size;
            });
    }
    let (loss, _) = loss_and_grad(&verts, mesh.adjacency(), &tree, cfg);
    check_finite(loss, cfg.iters + 1)?;
    trace.push(loss);

    Ok(RefineResult {
        mesh: mesh.with_vertices(verts)?,
        loss_trace: trace,
    })
}

fn check_finite(loss: f64, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalAbort(format!(
            "refinement loss became {loss} at step {step}"
        )))
    }
}
