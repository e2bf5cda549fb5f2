//! End-to-end runs: simulate or load events, label, carve, extract, refine
//! and evaluate, with a JSON report and a method comparison table.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ace::{label_events, SceneSpec, SceneSurface, DEFAULT_TOL_PX};
use crate::carving::{extract_occupancy, write_volume, CarveStats, CarveVolume, Mask, OccupancyGrid, SurfacePointSet};
use crate::error::{Error, Result};
use crate::events::{read_events, write_events, EventFormat, EventStream, Label};
use crate::geometry::{CameraIntrinsics, Trajectory, Vec3};
use crate::meshing::{marching_cubes, refine_mesh, write_mesh, RefineConfig, TriMesh};
use crate::metrics::{evaluate_mesh, Evaluation, DEFAULT_NORMAL_K, DEFAULT_SAMPLES};
use crate::simulator::{emit_contour_events, make_trajectory, render_masks, EmitterSpec, MaskView, OrbitSpec};

/// Reconstruction method: event carving or the N-view silhouette baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Evac3d,
    Mask(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Evac3d => write!(f, "evac3d"),
            Method::Mask(n) => write!(f, "mask-{n}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "evac3d" {
            return Ok(Method::Evac3d);
        }
        s.strip_prefix("mask-")
            .and_then(|n| n.parse().ok())
            .filter(|&n| n >= 2)
            .map(Method::Mask)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected evac3d or mask-N with N >= 2")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Voxels per side.
    pub dim: usize,
    /// Grid side as a multiple of the scene's largest bounding-box extent.
    pub padding: f64,
    /// Surface-point threshold as a percentile of the non-zero counts.
    pub eps_v_percentile: f64,
    /// Largest count still treated as free space by the occupancy flood fill.
    pub eps_free: u32,
    /// Event partitions carved in parallel.
    pub partitions: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            padding: 1.2,
            eps_v_percentile: 90.0,
            eps_free: 0,
            partitions: 4,
        }
    }
}

/// Refinement settings; unset lengths default to multiples of the voxel size
/// and scene diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSettings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eps_d: Option<f64>,
    pub iters: usize,
    pub step_size: Option<f64>,
}

impl Default for RefineSettings {
    fn default() -> Self {
        let d = RefineConfig::for_scene(1.0, 1.0);
        Self {
            lambda1: d.lambda1,
            lambda2: d.lambda2,
            eps_d: None,
            iters: d.iters,
            step_size: None,
        }
    }
}

impl RefineSettings {
    pub fn resolve(&self, voxel_size: f64, scene_diameter: f64) -> RefineConfig {
        let d = RefineConfig::for_scene(voxel_size, scene_diameter);
        RefineConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            eps_d: self.eps_d.unwrap_or(d.eps_d),
            iters: self.iters,
            step_size: self.step_size.unwrap_or(d.step_size),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            k: DEFAULT_NORMAL_K,
        }
    }
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    }
}

/// Everything a run needs. Recorded events and trajectory are used when
/// given; otherwise they are simulated from `orbit` and `emitter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub events: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    /// Ground-truth scene: grid placement, labels, masks and evaluation.
    pub scene: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    pub method: Method,
    /// Seed for evaluation sampling; simulation seeds live in `orbit` and `emitter`.
    pub seed: u64,
    /// Re-label events with the geometric oracle before carving.
    pub relabel: bool,
    /// Carve only ace-labeled events; `false` carves every event.
    pub use_labels: bool,
    pub tol_px: f64,
    pub grid: GridConfig,
    pub refine: RefineSettings,
    pub eval: EvalConfig,
    pub orbit: OrbitSpec,
    pub emitter: EmitterSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            events: None,
            trajectory: None,
            scene: SceneSpec::Sphere { center: [0.0; 3], radius: 1.0 },
            intrinsics: default_intrinsics(),
            method: Method::Evac3d,
            seed: 0,
            relabel: false,
            use_labels: true,
            tol_px: DEFAULT_TOL_PX,
            grid: GridConfig::default(),
            refine: RefineSettings::default(),
            eval: EvalConfig::default(),
            orbit: OrbitSpec::default(),
            emitter: EmitterSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks parameters, input files and that the output directory is writable.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.grid.dim < 8 {
            return bad(format!("grid dim must be at least 8, got {}", self.grid.dim));
        }
        if !(self.grid.padding >= 1.0 && self.grid.padding.is_finite()) {
            return bad(format!("grid padding must be >= 1, got {}", self.grid.padding));
        }
        if !(0.0..=100.0).contains(&self.grid.eps_v_percentile) {
            return bad(format!("eps_v percentile must be in [0, 100], got {}", self.grid.eps_v_percentile));
        }
        if !(self.tol_px > 0.0) {
            return bad(format!("tol_px must be positive, got {}", self.tol_px));
        }
        if self.eval.k == 0 || self.eval.n_samples <= self.eval.k {
            return bad(format!("evaluation needs n_samples > k > 0, got {} and {}", self.eval.n_samples, self.eval.k));
        }
        self.intrinsics.validate().map_err(|e| Error::Config(e.to_string()))?;
        let scene = self.scene.build().map_err(|e| Error::Config(format!("scene: {e}")))?;
        self.refine.resolve(1.0, 1.0).validate()?;
        if self.events.is_some() != self.trajectory.is_some() && self.method == Method::Evac3d {
            return bad("recorded events need a trajectory and vice versa".into());
        }
        for path in [&self.events, &self.trajectory].into_iter().flatten() {
            if !path.is_file() {
                return bad(format!("input file {} does not exist", path.display()));
            }
        }
        if self.trajectory.is_none() {
            self.orbit.validate().map_err(|e| Error::Config(e.to_string()))?;
            let (lo, hi) = scene.bounds();
            let target = Vec3::from(self.orbit.look_at);
            let reach = (0..8)
                .map(|c| Vec3::new(if c & 1 == 0 { lo.x } else { hi.x }, if c & 2 == 0 { lo.y } else { hi.y }, if c & 4 == 0 { lo.z } else { hi.z }))
                .map(|v| (v - target).norm())
                .fold(0.0, f64::max);
            if self.orbit.radius <= reach {
                return bad(format!("orbit radius {} does not clear the scene (needs > {reach:.3})", self.orbit.radius));
            }
        }
        self.emitter.validate().map_err(|e| Error::Config(e.to_string()))?;
        std::fs::create_dir_all(&self.output_dir).map_err(|e| Error::Config(format!("output dir {}: {e}", self.output_dir.display())))?;
        let probe = self.output_dir.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|e| Error::Config(format!("output dir {} is not writable: {e}", self.output_dir.display())))?;
        let _ = std::fs::remove_file(probe);
        Ok(())
    }
}

/// Per-run results. Everything except the timings is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub chamfer_mm: f64,
    pub normal_cos: f64,
    pub ops: u64,
    pub n_events: usize,
    pub n_carved: u64,
    pub voxel_size: f64,
    pub eps_v: u32,
    pub n_surface_points: usize,
    pub occupied_voxels: usize,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub n_samples: usize,
    pub k: usize,
    pub wall_time_s: f64,
    pub stage_times_s: BTreeMap<String, f64>,
    pub config: RunConfig,
}

impl RunReport {
    /// The report with timings zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.wall_time_s = 0.0;
        r.stage_times_s.values_mut().for_each(|v| *v = 0.0);
        r
    }
}

/// The result of carving: grid geometry, counts and ray bookkeeping.
#[derive(Debug, Clone)]
pub struct CarveOutcome {
    pub volume: CarveVolume,
    pub stats: CarveStats,
}

/// Intermediate products of turning a carved volume into a mesh.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub eps_v: u32,
    pub surface_points: SurfacePointSet,
    pub occupancy: OccupancyGrid,
    pub initial_mesh: TriMesh,
    pub mesh: TriMesh,
    pub loss_trace: Vec<f64>,
}

/// Empty grid of `cfg.dim`^3 voxels around the scene.
pub fn grid_for_scene(scene: &SceneSurface, cfg: &GridConfig) -> Result<CarveVolume> {
    let (lo, hi) = scene.bounds();
    CarveVolume::around(lo, hi, cfg.dim, cfg.padding)
}

/// Carves events into a fresh grid around the scene.
pub fn carve_events(
    scene: &SceneSurface,
    stream: &EventStream,
    traj: &Trajectory,
    intr: &CameraIntrinsics,
    grid: &GridConfig,
    use_labels: bool,
) -> Result<CarveOutcome> {
    let mut volume = grid_for_scene(scene, grid)?;
    let stats = volume.carve_event_stream_parallel(stream, traj, intr, use_labels, grid.partitions)?;
    Ok(CarveOutcome { volume, stats })
}

/// Carves the contour pixels of every mask into a fresh grid around the scene.
pub fn carve_masks(scene: &SceneSurface, views: &[MaskView], intr: &CameraIntrinsics, grid: &GridConfig) -> Result<CarveOutcome> {
    let mut volume = grid_for_scene(scene, grid)?;
    let mut stats = CarveStats::default();
    for v in views {
        stats.carved += volume.carve_mask(&v.mask, &v.pose, intr)?;
    }
    Ok(CarveOutcome { volume, stats })
}

/// Surface points and occupancy from the volume, Marching Cubes, then refinement.
pub fn reconstruct(volume: &CarveVolume, grid: &GridConfig, refine: &RefineConfig) -> Result<Reconstruction> {
    let eps_v = volume
        .nonzero_percentile(grid.eps_v_percentile)
        .ok_or_else(|| Error::ReconstructionFailed("volume has no carved voxels".into()))?
        .max(1);
    let surface_points = volume.extract_high_confidence(eps_v);
    let occupancy = extract_occupancy(volume, grid.eps_free)?;
    let initial_mesh = marching_cubes(&occupancy)?;
    let (mesh, loss_trace) = if surface_points.is_empty() || refine.iters == 0 {
        (initial_mesh.clone(), Vec::new())
    } else {
        let r = refine_mesh(&initial_mesh, &surface_points.points, refine)?;
        (r.mesh, r.loss_trace)
    };
    Ok(Reconstruction {
        eps_v,
        surface_points,
        occupancy,
        initial_mesh,
        mesh,
        loss_trace,
    })
}

/// Simulated inputs for one scene.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub events: EventStream,
    pub masks: Vec<MaskView>,
}

/// Manifest written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub scene: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    pub orbit: OrbitSpec,
    pub emitter: EmitterSpec,
    pub events_file: String,
    pub trajectory_file: String,
    pub mask_files: Vec<String>,
    pub mask_times: Vec<f64>,
    pub n_events: usize,
    pub n_ace: usize,
}

pub fn simulate(scene: &SceneSpec, intr: &CameraIntrinsics, orbit: &OrbitSpec, emitter: &EmitterSpec, n_mask_views: usize) -> Result<Simulation> {
    let surface = scene.build()?;
    let trajectory = make_trajectory(orbit)?;
    let events = emit_contour_events(&surface, &trajectory, intr, emitter)?;
    let masks = if n_mask_views > 0 { render_masks(&surface, &trajectory, intr, n_mask_views)? } else { Vec::new() };
    Ok(Simulation { trajectory, events, masks })
}

/// Writes events, TUM trajectory, PGM masks and `manifest.json` into `dir`.
pub fn write_simulation(
    sim: &Simulation,
    scene: &SceneSpec,
    intr: &CameraIntrinsics,
    orbit: &OrbitSpec,
    emitter: &EmitterSpec,
    dir: &Path,
    format: EventFormat,
) -> Result<SimulationManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let events_file = match format {
        EventFormat::Csv => "events.csv",
        EventFormat::Binary => "events.bin",
    };
    write_events(&sim.events, dir.join(events_file), format)?;
    sim.trajectory.write_tum(dir.join("trajectory.txt"))?;
    let mut mask_files = Vec::new();
    for (i, v) in sim.masks.iter().enumerate() {
        let name = format!("mask_{i:03}.pgm");
        v.mask.write_pgm(dir.join(&name))?;
        mask_files.push(name);
    }
    let manifest = SimulationManifest {
        scene: scene.clone(),
        intrinsics: *intr,
        orbit: *orbit,
        emitter: *emitter,
        events_file: events_file.into(),
        trajectory_file: "trajectory.txt".into(),
        mask_files,
        mask_times: sim.masks.iter().map(|v| v.t).collect(),
        n_events: sim.events.len(),
        n_ace: sim.events.count_label(Label::Ace),
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads masks listed in a manifest, with poses from the trajectory.
pub fn read_masks(dir: &Path, manifest: &SimulationManifest, traj: &Trajectory) -> Result<Vec<MaskView>> {
    manifest
        .mask_files
        .iter()
        .zip(&manifest.mask_times)
        .map(|(name, &t)| {
            Ok(MaskView {
                t,
                pose: traj.interpolate(t)?,
                mask: Mask::read_pgm(dir.join(name))?,
            })
        })
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Recorded trajectory and events when configured, otherwise simulated
/// ones. Mask runs get an empty stream.
pub fn load_inputs(cfg: &RunConfig, scene: &SceneSurface) -> Result<(Trajectory, EventStream)> {
    let intr = cfg.intrinsics;
    let trajectory = match &cfg.trajectory {
        Some(p) => Trajectory::read_tum(p)?,
        None => make_trajectory(&cfg.orbit)?,
    };
    let events = match (&cfg.events, cfg.method) {
        (_, Method::Mask(_)) => EventStream::empty(intr),
        (Some(p), _) => read_events(p, EventFormat::from_path(p), &intr)?,
        (None, _) => emit_contour_events(scene, &trajectory, &intr, &cfg.emitter)?,
    };
    Ok((trajectory, events))
}

/// Files created by a run, deleted again if a later stage fails.
struct OutputGuard {
    files: Vec<PathBuf>,
    keep: bool,
}

impl OutputGuard {
    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.keep {
            for f in &self.files {
                let _ = std::fs::remove_file(f);
            }
        }
    }
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

/// Runs the configured method end to end, writing `mesh.ply`,
/// `volume.vol` and `report.json` into the output directory. On failure the
/// error names the stage and files written by this run are removed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut times = BTreeMap::new();
    let mut timed = |name: &str, since: Instant| {
        times.insert(name.to_string(), since.elapsed().as_secs_f64());
    };
    cfg.validate().stage("config")?;
    let scene = cfg.scene.build().stage("config")?;
    let intr = cfg.intrinsics;
    let mut guard = OutputGuard { files: Vec::new(), keep: false };

    let t = Instant::now();
    let (trajectory, mut events) = load_inputs(cfg, &scene).stage("input")?;
    timed("input", t);

    if cfg.relabel && cfg.method == Method::Evac3d {
        let t = Instant::now();
        events = label_events(&events, &trajectory, &intr, &scene, cfg.tol_px).stage("label")?;
        timed("label", t);
    }

    let t = Instant::now();
    let carved = match cfg.method {
        Method::Evac3d => carve_events(&scene, &events, &trajectory, &intr, &cfg.grid, cfg.use_labels),
        Method::Mask(n) => render_masks(&scene, &trajectory, &intr, n).and_then(|views| carve_masks(&scene, &views, &intr, &cfg.grid)),
    }
    .stage("carve")?;
    timed("carve", t);
    log::info!("{}: {} carving ops on a {}^3 grid", cfg.method, carved.volume.ops, cfg.grid.dim);
    write_volume(&carved.volume, guard.track(cfg.output_dir.join("volume.vol"))).stage("carve")?;

    let t = Instant::now();
    let refine_cfg = cfg.refine.resolve(carved.volume.voxel_size, scene.diameter());
    let recon = reconstruct(&carved.volume, &cfg.grid, &refine_cfg).stage("extract")?;
    timed("extract_refine", t);
    log::info!("mesh: {} vertices, {} faces (eps_v {})", recon.mesh.num_vertices(), recon.mesh.num_faces(), recon.eps_v);
    write_mesh(&recon.mesh, guard.track(cfg.output_dir.join("mesh.ply"))).stage("extract")?;

    let t = Instant::now();
    let gt = scene.sample_surface(cfg.eval.n_samples, cfg.seed).stage("evaluate")?;
    let eval = evaluate_mesh(&recon.mesh, &gt, cfg.eval.n_samples, cfg.eval.k, cfg.seed.wrapping_add(1)).stage("evaluate")?;
    timed("evaluate", t);

    let report = RunReport {
        method: cfg.method,
        chamfer_mm: eval.chamfer_mm,
        normal_cos: eval.normal_cos,
        ops: carved.volume.ops,
        n_events: events.len(),
        n_carved: carved.stats.carved,
        voxel_size: carved.volume.voxel_size,
        eps_v: recon.eps_v,
        n_surface_points: recon.surface_points.len(),
        occupied_voxels: recon.occupancy.count_occupied(),
        mesh_vertices: recon.mesh.num_vertices(),
        mesh_faces: recon.mesh.num_faces(),
        n_samples: eval.n_samples,
        k: eval.k,
        wall_time_s: start.elapsed().as_secs_f64(),
        stage_times_s: times,
        config: cfg.clone(),
    };
    if !(report.chamfer_mm.is_finite() && report.normal_cos.is_finite()) {
        return Err(Error::NumericalAbort("non-finite evaluation result".into()).in_stage("evaluate"));
    }
    write_json(&report, &guard.track(cfg.output_dir.join("report.json"))).stage("report")?;
    guard.keep = true;
    Ok(report)
}

/// Evaluates an existing mesh against the scene.
pub fn evaluate_against_scene(mesh: &TriMesh, scene: &SceneSurface, eval: &EvalConfig, seed: u64) -> Result<Evaluation> {
    let gt = scene.sample_surface(eval.n_samples, seed)?;
    evaluate_mesh(mesh, &gt, eval.n_samples, eval.k, seed.wrapping_add(1))
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub ops: u64,
    pub chamfer_mm: f64,
    pub normal_cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Rows sorted by ops, then method name.
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let mut rows: Vec<ComparisonRow> = reports
            .iter()
            .map(|r| ComparisonRow {
                method: r.method,
                ops: r.ops,
                chamfer_mm: r.chamfer_mm,
                normal_cos: r.normal_cos,
            })
            .collect();
        rows.sort_by(|a, b| a.ops.cmp(&b.ops).then_with(|| a.method.cmp(&b.method)));
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,ops,chamfer_mm,normal_cos\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6},{:.6}", r.method, r.ops, r.chamfer_mm, r.normal_cos);
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| method | ops | chamfer (1e-3) | normal cos |\n|---|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(out, "| {} | {} | {:.3} | {:.4} |", r.method, r.ops, r.chamfer_mm, r.normal_cos);
        }
        out
    }
}

/// Runs every configuration and tabulates the results. All configurations
/// must describe the same scene.
pub fn compare_methods(cfgs: &[RunConfig]) -> Result<Comparison> {
    let Some(first) = cfgs.first() else {
        return Err(Error::Config("nothing to compare".into()));
    };
    if let Some(other) = cfgs.iter().find(|c| c.scene != first.scene) {
        return Err(Error::Config(format!("mismatched scenes: {:?} vs {:?}", first.scene, other.scene)));
    }
    let reports = cfgs.iter().map(run_pipeline).collect::<Result<Vec<_>>>()?;
    Ok(Comparison::from_reports(&reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{OrbitKind, Timing};

    fn small_config(dir: &Path) -> RunConfig {
        RunConfig {
            output_dir: dir.to_path_buf(),
            grid: GridConfig { dim: 48, ..GridConfig::default() },
            orbit: OrbitSpec { duration: 2.0, ..OrbitSpec::default() },
            emitter: EmitterSpec { event_rate: 20_000.0, timing: Timing::Uniform, ..EmitterSpec::default() },
            refine: RefineSettings { iters: 30, ..RefineSettings::default() },
            eval: EvalConfig { n_samples: 2000, k: 30 },
            ..RunConfig::default()
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::Evac3d, Method::Mask(12), Method::Mask(24)] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("mask-1".parse::<Method>().is_err());
        assert!("voxels".parse::<Method>().is_err());
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let cfg = RunConfig::from_toml_str("method = \"mask-12\"\n[grid]\ndim = 64\n[scene]\nshape = \"box\"\ncenter = [0, 0, 0]\nhalf_extents = [1, 0.5, 0.5]\n").unwrap();
        assert_eq!(cfg.method, Method::Mask(12));
        assert_eq!(cfg.grid.dim, 64);
        assert_eq!(cfg.grid.eps_v_percentile, 90.0);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(RunConfig::from_toml_str("grid_dim = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_catches_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let ok = small_config(dir.path());
        ok.validate().unwrap();
        let missing = RunConfig { events: Some(dir.path().join("nope.csv")), trajectory: Some(dir.path().join("nope.txt")), ..ok.clone() };
        assert!(matches!(missing.validate(), Err(Error::Config(_))));
        let tight = RunConfig { orbit: OrbitSpec { radius: 1.5, ..ok.orbit }, ..ok.clone() };
        assert!(tight.validate().is_err());
        let bad_grid = RunConfig { grid: GridConfig { dim: 4, ..ok.grid }, ..ok };
        assert!(bad_grid.validate().is_err());
    }

    #[test]
    fn sphere_run_writes_outputs_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let a = run_pipeline(&cfg).unwrap();
        for f in ["mesh.ply", "volume.vol", "report.json"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let vol = crate::carving::read_volume(dir.path().join("volume.vol")).unwrap();
        assert_eq!(vol.ops, a.ops);
        let mesh = crate::meshing::read_mesh(dir.path().join("mesh.ply")).unwrap();
        assert_eq!(mesh.num_faces(), a.mesh_faces);
        let back: RunReport = read_json(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, a);
        assert!(a.chamfer_mm < 2.0 * a.voxel_size * 1e3 * 2.0, "{a:?}");
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.without_timings()).unwrap(),
            serde_json::to_string(&b.without_timings()).unwrap()
        );
    }

    #[test]
    fn failed_run_is_stage_tagged_and_cleaned_up() {
        let dir = tempfile::tempdir().unwrap();
        // a handful of events cannot enclose a cavity
        let cfg = RunConfig {
            emitter: EmitterSpec { event_rate: 5.0, ..small_config(dir.path()).emitter },
            ..small_config(dir.path())
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "extract", .. }), "{err}");
        assert!(matches!(err.root(), Error::ReconstructionFailed(_)));
        assert!(!dir.path().join("volume.vol").exists());
        assert!(!dir.path().join("report.json").exists());
    }

    #[test]
    fn mask_ops_scale_with_views() {
        let dir = tempfile::tempdir().unwrap();
        let base = RunConfig { refine: RefineSettings { iters: 0, ..RefineSettings::default() }, ..small_config(dir.path()) };
        let scene = base.scene.build().unwrap();
        let traj = make_trajectory(&base.orbit).unwrap();
        let ops = |n| {
            let views = render_masks(&scene, &traj, &base.intrinsics, n).unwrap();
            carve_masks(&scene, &views, &base.intrinsics, &base.grid).unwrap().volume.ops as f64
        };
        let (o12, o24) = (ops(12), ops(24));
        assert!((o24 / o12 - 2.0).abs() <= 0.2, "{o12} {o24}");
    }

    #[test]
    fn comparison_table() {
        let rows = vec![
            RunReport { method: Method::Mask(24), ops: 300, chamfer_mm: 30.0, normal_cos: 0.9, ..dummy_report() },
            RunReport { method: Method::Evac3d, ops: 100, chamfer_mm: 10.0, normal_cos: 0.99, ..dummy_report() },
        ];
        let c = Comparison::from_reports(&rows);
        assert_eq!(c.rows[0].method, Method::Evac3d);
        assert_eq!(c.to_csv().lines().count(), 3);
        assert!(c.to_csv().starts_with("method,ops,chamfer_mm,normal_cos\nevac3d,100,"));
        assert!(c.to_markdown().contains("| mask-24 | 300 |"));
        let single = Comparison::from_reports(&rows[..1]);
        assert_eq!(single.rows.len(), 1);

        let other_scene = RunConfig { scene: SceneSpec::Sphere { center: [0.0; 3], radius: 2.0 }, ..RunConfig::default() };
        assert!(compare_methods(&[RunConfig::default(), other_scene]).is_err());
        assert!(compare_methods(&[]).is_err());
    }

    fn dummy_report() -> RunReport {
        RunReport {
            method: Method::Evac3d,
            chamfer_mm: 0.0,
            normal_cos: 0.0,
            ops: 0,
            n_events: 0,
            n_carved: 0,
            voxel_size: 0.0,
            eps_v: 0,
            n_surface_points: 0,
            occupied_voxels: 0,
            mesh_vertices: 0,
            mesh_faces: 0,
            n_samples: 0,
            k: 0,
            wall_time_s: 0.0,
            stage_times_s: BTreeMap::new(),
            config: RunConfig { orbit: OrbitSpec { kind: OrbitKind::Circular, ..OrbitSpec::default() }, ..RunConfig::default() },
        }
    }
}
