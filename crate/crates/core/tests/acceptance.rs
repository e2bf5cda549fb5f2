//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured values before asserting.
//!
//! Run with `cargo test -p acecarve --test acceptance -- --nocapture`.
//! Every tolerance is a named constant below with its rationale.

use std::time::Instant;

use acecarve::ace::{contour_generator, label_events, SceneSpec, SceneSurface, DEFAULT_TOL_PX};
use acecarve::carving::{extract_occupancy, CarveVolume};
use acecarve::events::{build_event_volume, Event, EventStream, Label};
use acecarve::geometry::{event_ray, Pose, Ray, Vec3};
use acecarve::meshing::{refine_loss, refine_mesh, RefineConfig, TriMesh};
use acecarve::metrics::{chamfer, normal_consistency, sample_mesh, OrientedPointSet};
use acecarve::pipeline::{
    carve_events, compare_methods, default_intrinsics, run_pipeline, simulate, EvalConfig, GridConfig, Method, RunConfig,
};
use acecarve::simulator::{make_trajectory, EmitterSpec, OrbitKind, OrbitSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ───────────────────────────── tolerances ─────────────────────────────

/// Sphere Chamfer bound in multiples of the voxel size.
const SPHERE_CHAMFER_VOXELS: f64 = 2.0;
/// Normal consistency floor for the reconstructed sphere.
const SPHERE_MIN_NORMAL_COS: f64 = 0.98;
/// Single-threaded wall-clock budget for the whole sphere run, seconds.
const SPHERE_MAX_SECONDS: f64 = 60.0;
/// Evaluation samples for the sphere. The Chamfer floor of two independent
/// n-point samples of the unit sphere is about 3.5/sqrt(n) (0.035 at 10^4),
/// which alone would nearly exhaust the 2-voxel bound; 10^5 samples bring it
/// to about 0.011.
const SPHERE_EVAL_SAMPLES: usize = 100_000;

/// Interior voxels at least this many voxel diagonals deep must stay at zero.
const INTERIOR_DEPTH_DIAGONALS: f64 = 1.5;
const TANGENT_RAYS_PER_SHAPE: usize = 100_000;

const BRESENHAM_RAYS: usize = 10_000;
/// A voxel center is at most half a voxel diagonal from any point in the voxel.
const BRESENHAM_MAX_CENTER_DISTANCE: f64 = 0.866_025_403_784_438_6; // sqrt(3)/2
/// Slack for the slab test and distance check, voxel units.
const BRESENHAM_SLACK: f64 = 1e-9;

const GRADIENT_MESHES: u64 = 20;
const GRADIENT_MAX_REL_ERROR: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;
const SHRINK_FACTOR: f64 = 0.95;
const MIN_RECOVERED_FRACTION: f64 = 0.5;

const METRIC_INSTANCES: usize = 2_000;
const METRIC_MAX_POINTS: usize = 10;
/// `|n . n|` of a unit normal differs from 1 only by rounding.
const SELF_CONSISTENCY_TOL: f64 = 1e-12;

const MASS_TOL: f64 = 1e-9;

/// Tangency residual bound relative to the scene diameter.
const TANGENCY_REL_TOL: f64 = 1e-6;
const MIN_ACE_RECALL: f64 = 0.999;
const MAX_CLUTTER_FALSE_POSITIVE: f64 = 0.01;

/// Free-space threshold for the trajectory study; see `trajectory_study`.
const STUDY_EPS_FREE: u32 = 4;

fn report(name: &str, pass: bool, detail: String) {
    println!("acceptance {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn out_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn sphere_spec() -> SceneSpec {
    SceneSpec::Sphere { center: [0.0; 3], radius: 1.0 }
}

// ─────────────────────── sphere reconstruction ────────────────────────

#[test]
fn sphere_reconstruction() {
    let dir = out_dir();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        scene: sphere_spec(),
        method: Method::Evac3d,
        orbit: OrbitSpec { kind: OrbitKind::RandomSphere, duration: 10.0, ..OrbitSpec::default() },
        emitter: EmitterSpec { event_rate: 20_000.0, jitter_px: 0.0, clutter_rate: 0.0, ..EmitterSpec::default() },
        grid: GridConfig { dim: 128, ..GridConfig::default() },
        eval: EvalConfig { n_samples: SPHERE_EVAL_SAMPLES, ..EvalConfig::default() },
        ..RunConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let r = pool.install(|| run_pipeline(&cfg)).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let bound = SPHERE_CHAMFER_VOXELS * r.voxel_size;
    let chamfer = r.chamfer_mm * 1e-3;
    let pass = chamfer < bound && r.normal_cos > SPHERE_MIN_NORMAL_COS && secs < SPHERE_MAX_SECONDS;
    report(
        "sphere_reconstruction",
        pass,
        format!(
            "events={} chamfer={chamfer:.5} (< {bound:.5}) normal={:.5} (> {SPHERE_MIN_NORMAL_COS}) time={secs:.1}s (< {SPHERE_MAX_SECONDS}s, 1 thread)",
            r.n_events, r.normal_cos
        ),
    );
    assert!((1.9e5..2.1e5).contains(&(r.n_events as f64)));
    assert!(pass);
}

// ───────────────────────── ops/quality ordering ─────────────────────────

#[test]
fn ops_quality_ordering() {
    let dir = out_dir();
    // At 128^3 an event budget matched to a 12-view baseline (about 10^4
    // rays) does not seal the hull, so both methods use a 64^3 grid.
    let base = RunConfig {
        scene: sphere_spec(),
        grid: GridConfig { dim: 64, ..GridConfig::default() },
        eval: EvalConfig { n_samples: SPHERE_EVAL_SAMPLES, ..EvalConfig::default() },
        ..RunConfig::default()
    };
    let with = |method: Method, sub: &str| RunConfig { method, output_dir: dir.path().join(sub), ..base.clone() };
    let m12 = run_pipeline(&with(Method::Mask(12), "m12")).unwrap();
    // event budget matched to the 12-view op count
    let mut evac = with(Method::Evac3d, "evac");
    evac.emitter.event_rate = m12.ops as f64 / evac.orbit.duration;
    let table = compare_methods(&[evac, with(Method::Mask(24), "m24"), with(Method::Mask(12), "m12")]).unwrap();
    let row = |m: Method| table.rows.iter().find(|r| r.method == m).unwrap().clone();
    let (e, a, b) = (row(Method::Evac3d), row(Method::Mask(12)), row(Method::Mask(24)));
    let pass = e.chamfer_mm < a.chamfer_mm && e.normal_cos > a.normal_cos && e.ops < b.ops;
    report(
        "ops_quality_ordering",
        pass,
        format!(
            "evac3d ops={} chamfer={:.3}e-3 normal={:.5} | mask-12 ops={} chamfer={:.3}e-3 normal={:.5} | mask-24 ops={} chamfer={:.3}e-3 normal={:.5}",
            e.ops, e.chamfer_mm, e.normal_cos, a.ops, a.chamfer_mm, a.normal_cos, b.ops, b.chamfer_mm, b.normal_cos
        ),
    );
    print!("{}", table.to_markdown());
    assert!(pass);
}

// ─────────────────────── convex-interior emptiness ───────────────────────

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn perpendicular_unit(m: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = unit(rng);
        let p = v - m * v.dot(m);
        if p.norm() > 1e-3 {
            return p.normalize();
        }
    }
}

/// A point on the surface and a supporting-plane normal there; any line
/// through the point perpendicular to that normal touches without entering.
fn tangent_contact(shape: &SceneSurface, rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    match shape {
        SceneSurface::Sphere { center, radius } => {
            let n = unit(rng);
            (center + n * *radius, n)
        }
        SceneSurface::Box { center, half_extents } => {
            // a point on a random face, edge or corner; the supporting normal
            // is a random conic combination of the incident face normals
            let mut local = Vec3::zeros();
            let mut normal = Vec3::zeros();
            let kind = rng.random_range(0..3);
            let pinned: Vec<usize> = match kind {
                0 => vec![rng.random_range(0..3)],
                1 => {
                    let a = rng.random_range(0..3);
                    vec![a, (a + rng.random_range(1..3)) % 3]
                }
                _ => vec![0, 1, 2],
            };
            for a in 0..3 {
                if pinned.contains(&a) {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    local[a] = s * half_extents[a];
                    normal[a] = s * rng.random_range(0.05..1.0);
                } else {
                    local[a] = rng.random_range(-1.0..1.0) * half_extents[a];
                }
            }
            (center + local, normal.normalize())
        }
        SceneSurface::Cylinder { center, radius, half_height, axis } => {
            let radial = perpendicular_unit(axis, rng);
            match rng.random_range(0..3) {
                0 => {
                    let h = rng.random_range(-1.0..1.0) * half_height;
                    (center + axis * h + radial * *radius, radial)
                }
                1 => {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let r = radius * rng.random_range(0.0..1.0f64).sqrt();
                    (center + axis * (s * half_height) + radial * r, axis * s)
                }
                _ => {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let m = radial * rng.random_range(0.05..1.0) + axis * (s * rng.random_range(0.05..1.0));
                    (center + axis * (s * half_height) + radial * *radius, m.normalize())
                }
            }
        }
        SceneSurface::Mesh(_) => unreachable!("convex analytic shapes only"),
    }
}

/// Depth of `p` below the surface; negative outside.
fn inside_depth(shape: &SceneSurface, p: &Vec3) -> f64 {
    match shape {
        SceneSurface::Sphere { center, radius } => radius - (p - center).norm(),
        SceneSurface::Box { center, half_extents } => {
            let d = p - center;
            (0..3).map(|a| half_extents[a] - d[a].abs()).fold(f64::INFINITY, f64::min)
        }
        SceneSurface::Cylinder { center, radius, half_height, axis } => {
            let d = p - center;
            let h = d.dot(axis);
            let r = (d - axis * h).norm();
            (radius - r).min(half_height - h.abs())
        }
        SceneSurface::Mesh(_) => unreachable!(),
    }
}

#[test]
fn convex_interior_emptiness() {
    let shapes = [
        SceneSurface::sphere(Vec3::new(0.1, -0.2, 0.05), 1.0).unwrap(),
        SceneSurface::cuboid(Vec3::new(0.0, 0.1, 0.0), Vec3::new(1.0, 0.6, 0.4)).unwrap(),
        SceneSurface::cylinder(Vec3::zeros(), 0.5, 0.8, Vec3::new(1.0, 1.0, 2.0)).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut details = Vec::new();
    let mut pass = true;
    for shape in &shapes {
        let (lo, hi) = shape.bounds();
        let mut vol = CarveVolume::around(lo, hi, 64, 1.2).unwrap();
        let far = 10.0 * shape.diameter();
        for _ in 0..TANGENT_RAYS_PER_SHAPE {
            let (p, m) = tangent_contact(shape, &mut rng);
            let d = perpendicular_unit(&m, &mut rng);
            vol.carve_event(&Ray::new(p - d * far, d).unwrap()).unwrap();
        }
        let min_depth = INTERIOR_DEPTH_DIAGONALS * 3f64.sqrt() * vol.voxel_size;
        let [nx, ny, nz] = vol.dims;
        let (mut deep, mut hit) = (0usize, 0usize);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if inside_depth(shape, &vol.voxel_center(x, y, z)) >= min_depth {
                        deep += 1;
                        if vol.get(x, y, z) > 0 {
                            hit += 1;
                        }
                    }
                }
            }
        }
        let name = match shape {
            SceneSurface::Sphere { .. } => "sphere",
            SceneSurface::Box { .. } => "box",
            _ => "cylinder",
        };
        pass &= hit == 0 && deep > 0 && vol.ops == TANGENT_RAYS_PER_SHAPE as u64;
        details.push(format!("{name}: {hit}/{deep} deep voxels touched"));
    }
    report("convex_interior_emptiness", pass, format!("{} rays each; {}", TANGENT_RAYS_PER_SHAPE, details.join(", ")));
    assert!(pass);
}

// ─────────────────────────── carving determinism ───────────────────────────

#[test]
fn carving_determinism() {
    let intr = default_intrinsics();
    let orbit = OrbitSpec { duration: 3.0, ..OrbitSpec::default() };
    let emitter = EmitterSpec { event_rate: 10_000.0, clutter_rate: 2_000.0, jitter_px: 0.3, ..EmitterSpec::default() };
    let sim = simulate(&sphere_spec(), &intr, &orbit, &emitter, 0).unwrap();
    let scene = sphere_spec().build().unwrap();
    let grid = GridConfig { dim: 96, ..GridConfig::default() };

    let mut pass = true;
    for use_labels in [true, false] {
        let seq = carve_events(&scene, &sim.events, &sim.trajectory, &intr, &GridConfig { partitions: 1, ..grid }, use_labels).unwrap();
        let par = carve_events(&scene, &sim.events, &sim.trajectory, &intr, &GridConfig { partitions: 4, ..grid }, use_labels).unwrap();
        pass &= seq.volume == par.volume;

        let mut shuffled: Vec<Event> = sim.events.events().to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let mut vol = seq.volume.zeroed_like();
        for e in shuffled.iter().filter(|e| !use_labels || e.label == Label::Ace) {
            vol.carve_event(&event_ray(e, &sim.trajectory, &intr).unwrap()).unwrap();
        }
        pass &= vol == seq.volume && vol.counts() == seq.volume.counts() && vol.ops == seq.volume.ops;
    }
    report(
        "carving_determinism",
        pass,
        format!("{} events, shuffled and 4-way partitioned volumes bit-identical to sequential", sim.events.len()),
    );
    assert!(pass);
}

// ─────────────────────────── Bresenham oracle ───────────────────────────

/// Whether the segment `o + s d`, `s` in `[s0, s1]`, meets the unit voxel at `v`.
fn segment_meets_voxel(o: &Vec3, d: &Vec3, v: [usize; 3]) -> bool {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        let lo = v[a] as f64 - BRESENHAM_SLACK;
        let hi = v[a] as f64 + 1.0 + BRESENHAM_SLACK;
        if d[a].abs() < 1e-300 {
            if o[a] < lo || o[a] > hi {
                return false;
            }
        } else {
            let (a0, a1) = ((lo - o[a]) / d[a], (hi - o[a]) / d[a]);
            t0 = t0.max(a0.min(a1));
            t1 = t1.min(a0.max(a1));
        }
    }
    t0 <= t1 && t1 >= 0.0
}

#[test]
fn bresenham_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vol = CarveVolume::new([40, 32, 48], Vec3::new(-1.0, -0.8, -1.2), 0.05).unwrap();
    let (lo, hi) = (vol.origin, vol.origin + Vec3::new(40.0, 32.0, 48.0) * vol.voxel_size);
    let (mut visited, mut hits, mut bad_dist, mut bad_step, mut bad_oracle) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for _ in 0..BRESENHAM_RAYS {
        // origins both inside and outside the grid
        let o = Vec3::new(
            rng.random_range(lo.x - 1.0..hi.x + 1.0),
            rng.random_range(lo.y - 1.0..hi.y + 1.0),
            rng.random_range(lo.z - 1.0..hi.z + 1.0),
        );
        let ray = Ray::new(o, unit(&mut rng)).unwrap();
        let path = vol.traverse(&ray).unwrap();
        if !path.is_empty() {
            hits += 1;
        }
        visited += path.len();
        let ov = (ray.origin - vol.origin) / vol.voxel_size;
        for v in &path {
            let c = vol.voxel_center(v[0], v[1], v[2]);
            if ray.line_distance(&c) / vol.voxel_size > BRESENHAM_MAX_CENTER_DISTANCE + BRESENHAM_SLACK {
                bad_dist += 1;
            }
            if !segment_meets_voxel(&ov, &ray.direction, *v) {
                bad_oracle += 1;
            }
        }
        let dominant = ray.direction.iamax();
        for w in path.windows(2) {
            let step: Vec<i64> = (0..3).map(|a| w[1][a] as i64 - w[0][a] as i64).collect();
            let ok = step[dominant].abs() == 1 && step.iter().all(|s| s.abs() <= 1);
            if !ok {
                bad_step += 1;
            }
        }
    }
    let pass = bad_dist == 0 && bad_step == 0 && bad_oracle == 0 && hits > BRESENHAM_RAYS / 4;
    report(
        "bresenham_oracle",
        pass,
        format!(
            "{BRESENHAM_RAYS} rays ({hits} hit the grid), {visited} voxels: {bad_dist} beyond sqrt(3)/2 voxel, {bad_oracle} not met by the ray, {bad_step} invalid steps"
        ),
    );
    assert!(pass);
}

// ─────────────────────────── refinement ───────────────────────────

/// Loss with the nearest-point assignment frozen, summed straight from the
/// definition.
fn loss_by_definition(verts: &[Vec3], adjacency: &[Vec<usize>], targets: &[Option<Vec3>], c: &RefineConfig) -> f64 {
    let n = verts.len() as f64;
    let mut total = 0.0;
    for (i, p) in verts.iter().enumerate() {
        if let Some(q) = targets[i] {
            total += c.lambda1 / n * (p - q).norm_squared();
        }
        let nb = &adjacency[i];
        if !nb.is_empty() {
            total += c.lambda2 / n / nb.len() as f64 * nb.iter().map(|&j| (verts[j] - p).norm()).sum::<f64>();
        }
    }
    total
}

#[test]
fn refinement_gradient_and_recovery() {
    let mut worst = 0.0f64;
    for seed in 0..GRADIENT_MESHES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mesh = TriMesh::icosphere(Vec3::zeros(), 1.0, 1 + (seed % 2) as u32)
            .map_vertices(|v| v + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.15);
        let surf: Vec<Vec3> = (0..80).map(|_| unit(&mut rng) * rng.random_range(0.8..1.2)).collect();
        let c = RefineConfig {
            lambda1: rng.random_range(0.5..2.0),
            lambda2: rng.random_range(0.05..0.5),
            eps_d: 0.3,
            iters: 1,
            step_size: 1e-3,
        };
        let (_, grad) = refine_loss(&mesh, &surf, &c).unwrap();
        let targets: Vec<Option<Vec3>> = mesh
            .vertices()
            .iter()
            .map(|p| {
                let q = surf.iter().min_by(|a, b| (*a - p).norm_squared().total_cmp(&(*b - p).norm_squared())).unwrap();
                ((q - p).norm() < c.eps_d).then_some(*q)
            })
            .collect();
        let mut verts = mesh.vertices().to_vec();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..verts.len() {
            for a in 0..3 {
                let x = verts[i][a];
                verts[i][a] = x + FD_STEP;
                let plus = loss_by_definition(&verts, mesh.adjacency(), &targets, &c);
                verts[i][a] = x - FD_STEP;
                let minus = loss_by_definition(&verts, mesh.adjacency(), &targets, &c);
                verts[i][a] = x;
                let fd = (plus - minus) / (2.0 * FD_STEP);
                num += (grad[i][a] - fd).powi(2);
                den += fd * fd;
            }
        }
        worst = worst.max((num / den).sqrt());
    }

    // controlled experiment: a 5%-shrunk icosphere pulled back to the unit sphere
    let sphere = SceneSurface::sphere(Vec3::zeros(), 1.0).unwrap();
    let gt = sphere.sample_surface(SPHERE_EVAL_SAMPLES, 1).unwrap();
    let surf = sphere.sample_surface(20_000, 2).unwrap().points().to_vec();
    let shrunk = TriMesh::icosphere(Vec3::zeros(), SHRINK_FACTOR, 4);
    let voxel = 2.4 / 128.0;
    let refined = refine_mesh(&shrunk, &surf, &RefineConfig::for_scene(voxel, 2.0)).unwrap().mesh;
    let error = |m: &TriMesh| chamfer(sample_mesh(m, SPHERE_EVAL_SAMPLES, 3).unwrap().points(), gt.points()).unwrap();
    let (before, after) = (error(&shrunk), error(&refined));
    let recovered = (before - after) / before;

    let pass = worst < GRADIENT_MAX_REL_ERROR && recovered >= MIN_RECOVERED_FRACTION;
    report(
        "refinement",
        pass,
        format!(
            "gradient rel. error max {worst:.2e} over {GRADIENT_MESHES} meshes (< {GRADIENT_MAX_REL_ERROR:.0e}); shrunk sphere chamfer {before:.5} -> {after:.5}, recovered {:.1}% (>= {:.0}%)",
            100.0 * recovered,
            100.0 * MIN_RECOVERED_FRACTION
        ),
    );
    assert!(pass);
}

// ─────────────────────────── metric oracles ───────────────────────────

fn brute_nearest(q: &Vec3, pts: &[Vec3]) -> usize {
    let mut best = 0;
    for (j, p) in pts.iter().enumerate() {
        if (p - q).norm_squared() < (pts[best] - q).norm_squared() {
            best = j;
        }
    }
    best
}

fn brute_mean_nearest(from: &[Vec3], to: &[Vec3]) -> f64 {
    let d: Vec<f64> = from.iter().map(|q| (to[brute_nearest(q, to)] - q).norm_squared().sqrt()).collect();
    d.iter().sum::<f64>() / from.len() as f64
}

fn random_oriented(rng: &mut ChaCha8Rng, n: usize) -> OrientedPointSet {
    // a small integer lattice makes exact distance ties common
    let points = (0..n)
        .map(|_| Vec3::new(rng.random_range(-2..3) as f64, rng.random_range(-2..3) as f64, rng.random_range(-2..3) as f64) * 0.5)
        .collect();
    let normals = (0..n).map(|_| unit(rng)).collect();
    OrientedPointSet::new(points, normals).unwrap()
}

#[test]
fn metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0usize;
    for _ in 0..METRIC_INSTANCES {
        let (na, nb) = (rng.random_range(1..=METRIC_MAX_POINTS), rng.random_range(1..=METRIC_MAX_POINTS));
        let a = random_oriented(&mut rng, na);
        let b = random_oriented(&mut rng, nb);
        let expected_chamfer = brute_mean_nearest(a.points(), b.points()) + brute_mean_nearest(b.points(), a.points());
        let cos: Vec<f64> = a
            .points()
            .iter()
            .zip(a.normals())
            .map(|(p, n)| n.dot(&b.normals()[brute_nearest(p, b.points())]).abs().min(1.0))
            .collect();
        let expected_normal = cos.iter().sum::<f64>() / a.len() as f64;
        if chamfer(a.points(), b.points()).unwrap() != expected_chamfer || normal_consistency(&a, &b).unwrap() != expected_normal {
            mismatches += 1;
        }
    }
    let x = random_oriented(&mut rng, METRIC_MAX_POINTS);
    let self_chamfer = chamfer(x.points(), x.points()).unwrap();
    let samples = sample_mesh(&TriMesh::icosphere(Vec3::zeros(), 1.0, 2), 5_000, 11).unwrap();
    let self_normal = normal_consistency(&samples, &samples).unwrap();

    let pass = mismatches == 0 && self_chamfer == 0.0 && (self_normal - 1.0).abs() <= SELF_CONSISTENCY_TOL;
    report(
        "metric_oracles",
        pass,
        format!(
            "{mismatches}/{METRIC_INSTANCES} instances differ from brute force; chamfer(X,X)={self_chamfer}; self normal consistency={self_normal:.15}"
        ),
    );
    assert!(pass);
}

// ─────────────────────── event-volume mass conservation ───────────────────────

#[test]
fn event_volume_mass_conservation() {
    let intr = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let (t0, t1) = (rng.random_range(0.0..1.0), rng.random_range(1.5..3.0));
        let events: Vec<Event> = (0..5_000)
            .map(|_| {
                let p = if rng.random_bool(0.5) { 1 } else { -1 };
                Event::new(rng.random_range(0..intr.width as u16), rng.random_range(0..intr.height as u16), rng.random_range(0.0..4.0), p)
            })
            .collect();
        let stream = EventStream::from_unsorted(events, intr).unwrap();
        let bins = 2 + trial % 9;
        let vol = build_event_volume(&stream, (t0, t1), bins).unwrap();
        let expected: f64 = stream.events().iter().filter(|e| e.t >= t0 && e.t <= t1).map(|e| f64::from(e.p)).sum();
        worst = worst.max((vol.sum() - expected).abs());
    }
    let pass = worst <= MASS_TOL;
    report("event_volume_mass", pass, format!("max |sum bins - sum p| = {worst:.2e} over 20 volumes (<= {MASS_TOL:.0e})"));
    assert!(pass);
}

// ─────────────────────────── contour oracle ───────────────────────────

#[test]
fn ace_oracle_soundness() {
    let shapes = [
        ("sphere", SceneSurface::sphere(Vec3::new(0.1, 0.0, -0.1), 1.0).unwrap()),
        ("box", SceneSurface::cuboid(Vec3::zeros(), Vec3::new(0.8, 0.5, 0.4)).unwrap()),
        ("cylinder", SceneSurface::cylinder(Vec3::zeros(), 0.5, 0.7, Vec3::new(0.3, -1.0, 0.5)).unwrap()),
        ("mesh", SceneSurface::mesh(TriMesh::icosphere(Vec3::zeros(), 1.0, 3)).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_rel = 0.0f64;
    let mut n_points = 0usize;
    for (_, shape) in &shapes {
        for _ in 0..200 {
            let eye = unit(&mut rng) * rng.random_range(2.5..5.0);
            let pose = Pose::look_at(eye, Vec3::zeros(), perpendicular_unit(&eye.normalize(), &mut rng)).unwrap();
            let cg = contour_generator(shape, &pose).unwrap();
            for (x, n) in cg.points() {
                worst_rel = worst_rel.max(n.dot(&(x - pose.center())).abs() / shape.diameter());
                n_points += 1;
            }
        }
    }

    let intr = default_intrinsics();
    let mut recall_parts = Vec::new();
    let mut fp_parts = Vec::new();
    let (mut min_recall, mut max_fp) = (1.0f64, 0.0f64);
    for (name, spec) in [
        ("sphere", sphere_spec()),
        ("box", SceneSpec::Box { center: [0.0; 3], half_extents: [0.6, 0.5, 0.4] }),
        ("cylinder", SceneSpec::Cylinder { center: [0.0; 3], radius: 0.5, half_height: 0.7, axis: [0.0, 0.0, 1.0] }),
    ] {
        let orbit = OrbitSpec { duration: 4.0, seed: 4, ..OrbitSpec::default() };
        let emitter = EmitterSpec { event_rate: 20_000.0, clutter_rate: 5_000.0, jitter_px: 0.0, seed: 4, ..EmitterSpec::default() };
        let sim = simulate(&spec, &intr, &orbit, &emitter, 0).unwrap();
        let truth: Vec<Label> = sim.events.events().iter().map(|e| e.label).collect();
        let blank = sim.events.clone().with_labels(&vec![Label::Unknown; truth.len()]).unwrap();
        let labeled = label_events(&blank, &sim.trajectory, &intr, &spec.build().unwrap(), DEFAULT_TOL_PX).unwrap();
        let (mut ace, mut ace_hit, mut clutter, mut clutter_hit) = (0usize, 0usize, 0usize, 0usize);
        for (t, e) in truth.iter().zip(labeled.events()) {
            match t {
                Label::Ace => {
                    ace += 1;
                    ace_hit += usize::from(e.label == Label::Ace);
                }
                _ => {
                    clutter += 1;
                    clutter_hit += usize::from(e.label == Label::Ace);
                }
            }
        }
        let recall = ace_hit as f64 / ace as f64;
        let fp = clutter_hit as f64 / clutter as f64;
        min_recall = min_recall.min(recall);
        max_fp = max_fp.max(fp);
        recall_parts.push(format!("{name} {:.4}%", 100.0 * recall));
        fp_parts.push(format!("{name} {:.3}% of {clutter}", 100.0 * fp));
    }
    let pass = worst_rel <= TANGENCY_REL_TOL && min_recall >= MIN_ACE_RECALL && max_fp <= MAX_CLUTTER_FALSE_POSITIVE;
    report(
        "ace_oracle_soundness",
        pass,
        format!(
            "tangency max {worst_rel:.2e}*diam over {n_points} points; recall {}; clutter false positives {}",
            recall_parts.join(", "),
            fp_parts.join(", ")
        ),
    );
    assert!(pass);
}

// ─────────────────────────── trajectory study ───────────────────────────

/// Carving occupancy error (symmetric-difference volume against the true
/// box) for one orbit at a fixed event budget.
fn occupancy_error(kind: OrbitKind, eps_free: u32) -> (f64, f64) {
    let spec = SceneSpec::Box { center: [0.0; 3], half_extents: [0.3, 0.3, 1.0] };
    let scene = spec.build().unwrap();
    let intr = default_intrinsics();
    let orbit = OrbitSpec { kind, ..OrbitSpec::default() };
    let emitter = EmitterSpec { event_rate: 20_000.0, ..EmitterSpec::default() };
    let sim = simulate(&spec, &intr, &orbit, &emitter, 0).unwrap();
    let carved = carve_events(&scene, &sim.events, &sim.trajectory, &intr, &GridConfig::default(), true).unwrap();
    let occ = extract_occupancy(&carved.volume, eps_free).unwrap();
    (occ.symmetric_difference_volume(|p| scene.contains(p)), sim.events.len() as f64)
}

/// Elongated box, 2*10^5 events per orbit. Free space is taken as voxels
/// crossed by at most a few rays: single pixel-quantized rays that graze a
/// long flat face from end-on views otherwise shave whole voxel layers off
/// the interior, and that discretization loss (not view coverage) would
/// dominate the comparison. Both orbits use the same threshold; the
/// `eps_free = 0` values are printed for reference.
#[test]
fn trajectory_study() {
    let (random, n_random) = occupancy_error(OrbitKind::RandomSphere, STUDY_EPS_FREE);
    let (circular, n_circular) = occupancy_error(OrbitKind::Circular, STUDY_EPS_FREE);
    let (random0, _) = occupancy_error(OrbitKind::RandomSphere, 0);
    let (circular0, _) = occupancy_error(OrbitKind::Circular, 0);
    let budget_match = (n_random / n_circular - 1.0).abs() < 0.01;
    let pass = random <= circular && budget_match;
    report(
        "trajectory_study",
        pass,
        format!(
            "symmetric-difference volume random_sphere={random:.5} <= circular={circular:.5} (eps_free={STUDY_EPS_FREE}, {n_random} vs {n_circular} events); at eps_free=0: {random0:.5} vs {circular0:.5}"
        ),
    );
    assert!(pass);
}

#[test]
fn orbits_respect_budget_and_radius() {
    // guards the study's equal-budget premise: every orbit kind has the same
    // duration and stays on the sphere of the configured radius
    for kind in [OrbitKind::Circular, OrbitKind::Octahedral, OrbitKind::RandomSphere] {
        let traj = make_trajectory(&OrbitSpec { kind, ..OrbitSpec::default() }).unwrap();
        assert!((traj.end() - traj.start() - 10.0).abs() < 0.011);
        for s in traj.samples() {
            assert!((s.1.center().norm() - 3.0).abs() < 1e-9);
        }
    }
}
