//! `acecarve`: simulate, label, carve, extract, refine, evaluate, run and
//! compare from the command line. Every subcommand reads an optional TOML
//! run configuration; flags override individual fields.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acecarve::ace::label_events;
use acecarve::carving::{read_volume, write_volume};
use acecarve::events::{write_events, EventFormat};
use acecarve::meshing::{read_mesh, refine_mesh, write_mesh};
use acecarve::pipeline::{
    carve_events, carve_masks, compare_methods, evaluate_against_scene, load_inputs, reconstruct, simulate, write_json,
    write_simulation, Method, RunConfig,
};
use acecarve::simulator::render_masks;
use acecarve::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "acecarve", version, about = "Event-based apparent-contour carving")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML run configuration; defaults are used for missing fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_dim: Option<usize>,
    #[arg(long)]
    eps_v_percentile: Option<f64>,
    #[arg(long)]
    eps_free: Option<u32>,
    #[arg(long)]
    tol_px: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    refine_iters: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.grid_dim {
            cfg.grid.dim = v;
        }
        if let Some(v) = self.eps_v_percentile {
            cfg.grid.eps_v_percentile = v;
        }
        if let Some(v) = self.eps_free {
            cfg.grid.eps_free = v;
        }
        if let Some(v) = self.tol_px {
            cfg.tol_px = v;
        }
        if let Some(v) = self.lambda1 {
            cfg.refine.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.refine.lambda2 = v;
        }
        if let Some(v) = self.eps_d {
            cfg.refine.eps_d = Some(v);
        }
        if let Some(v) = self.refine_iters {
            cfg.refine.iters = v;
        }
        if let Some(v) = self.eval_samples {
            cfg.eval.n_samples = v;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

impl From<Format> for EventFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => EventFormat::Csv,
            Format::Bin => EventFormat::Binary,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate contour events, a trajectory and silhouette masks for the configured scene.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Number of silhouette masks to render alongside the events.
        #[arg(long, default_value_t = 0)]
        mask_views: usize,
    },
    /// Label recorded events as apparent-contour events with the scene oracle.
    Label {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Output file; `.csv`/`.txt` gives CSV, anything else binary.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Carve events (or masks for mask-N) into a volume file.
    Carve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, requires = "trajectory")]
        events: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Extract the Marching Cubes mesh of a carved volume.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        volume: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Refine a mesh toward the high-confidence points of a volume.
    Refine {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Chamfer distance and normal consistency of a mesh against the scene.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Run the configured method end to end.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Run several methods on one scene and tabulate ops and accuracy.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Methods to compare, e.g. `evac3d,mask-12,mask-24`.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::ReconstructionFailed(_) => 3,
        Error::NumericalAbort(_) => 4,
        _ => 1,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    // a closed pipe (e.g. `| head`) is not an error for the run itself
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { cfg, out, format, mask_views } => {
            let cfg = cfg.load()?;
            let sim = simulate(&cfg.scene, &cfg.intrinsics, &cfg.orbit, &cfg.emitter, mask_views)?;
            let manifest = write_simulation(&sim, &cfg.scene, &cfg.intrinsics, &cfg.orbit, &cfg.emitter, &out, format.into())?;
            log::info!("wrote {} events and {} masks to {}", manifest.n_events, manifest.mask_files.len(), out.display());
            print_json(&manifest)
        }
        Command::Label { cfg, events, trajectory, out } => {
            let mut cfg = cfg.load()?;
            cfg.method = Method::Evac3d;
            cfg.events = Some(events);
            cfg.trajectory = Some(trajectory);
            let scene = cfg.scene.build()?;
            let (traj, stream) = load_inputs(&cfg, &scene)?;
            let labeled = label_events(&stream, &traj, &cfg.intrinsics, &scene, cfg.tol_px)?;
            ensure_parent(&out)?;
            write_events(&labeled, &out, EventFormat::from_path(&out))?;
            println!("{} of {} events labeled ace", labeled.count_label(acecarve::events::Label::Ace), labeled.len());
            Ok(())
        }
        Command::Carve { cfg, events, trajectory, out } => {
            let mut cfg = cfg.load()?;
            if events.is_some() {
                cfg.events = events;
            }
            if trajectory.is_some() {
                cfg.trajectory = trajectory;
            }
            let scene = cfg.scene.build()?;
            let (traj, stream) = load_inputs(&cfg, &scene)?;
            let carved = match cfg.method {
                Method::Evac3d => carve_events(&scene, &stream, &traj, &cfg.intrinsics, &cfg.grid, cfg.use_labels)?,
                Method::Mask(n) => {
                    let views = render_masks(&scene, &traj, &cfg.intrinsics, n)?;
                    carve_masks(&scene, &views, &cfg.intrinsics, &cfg.grid)?
                }
            };
            ensure_parent(&out)?;
            write_volume(&carved.volume, &out)?;
            println!("ops {}", carved.volume.ops);
            Ok(())
        }
        Command::Extract { cfg, volume, out } => {
            let mut cfg = cfg.load()?;
            cfg.refine.iters = 0;
            let vol = read_volume(&volume)?;
            let rec = reconstruct(&vol, &cfg.grid, &cfg.refine.resolve(vol.voxel_size, 1.0))?;
            ensure_parent(&out)?;
            write_mesh(&rec.mesh, &out)?;
            println!(
                "eps_v {} surface points {} occupied voxels {} faces {}",
                rec.eps_v,
                rec.surface_points.len(),
                rec.occupancy.count_occupied(),
                rec.mesh.num_faces()
            );
            Ok(())
        }
        Command::Refine { cfg, volume, mesh, out } => {
            let cfg = cfg.load()?;
            let vol = read_volume(&volume)?;
            let mesh = read_mesh(&mesh)?;
            let eps_v = vol
                .nonzero_percentile(cfg.grid.eps_v_percentile)
                .ok_or_else(|| Error::ReconstructionFailed("volume has no carved voxels".into()))?
                .max(1);
            let surf = vol.extract_high_confidence(eps_v);
            let scene = cfg.scene.build()?;
            let result = refine_mesh(&mesh, &surf.points, &cfg.refine.resolve(vol.voxel_size, scene.diameter()))?;
            ensure_parent(&out)?;
            write_mesh(&result.mesh, &out)?;
            let first = result.loss_trace.first().copied().unwrap_or(0.0);
            let last = result.loss_trace.last().copied().unwrap_or(0.0);
            println!("loss {first:.6e} -> {last:.6e}");
            Ok(())
        }
        Command::Evaluate { cfg, mesh } => {
            let cfg = cfg.load()?;
            let scene = cfg.scene.build()?;
            let mesh = read_mesh(&mesh)?;
            print_json(&evaluate_against_scene(&mesh, &scene, &cfg.eval, cfg.seed)?)
        }
        Command::Run { cfg, output_dir } => {
            let mut cfg = cfg.load()?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let report = acecarve::pipeline::run_pipeline(&cfg)?;
            println!(
                "{}: chamfer {:.3}e-3 normal {:.4} ops {} in {:.1}s -> {}",
                report.method,
                report.chamfer_mm,
                report.normal_cos,
                report.ops,
                report.wall_time_s,
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Compare { cfg, methods, output_dir } => {
            let mut base = cfg.load()?;
            if let Some(dir) = output_dir {
                base.output_dir = dir;
            }
            let cfgs: Vec<RunConfig> = methods
                .iter()
                .map(|&method| RunConfig {
                    method,
                    output_dir: base.output_dir.join(method.to_string()),
                    ..base.clone()
                })
                .collect();
            let table = compare_methods(&cfgs)?;
            std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
            for (name, text) in [("comparison.csv", table.to_csv()), ("comparison.md", table.to_markdown())] {
                let path = base.output_dir.join(name);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            write_json(&table, &base.output_dir.join("comparison.json"))?;
            print!("{}", table.to_markdown());
            Ok(())
        }
    }
}
