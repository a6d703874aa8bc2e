//! `deftrack sim | track | eval | full` — see the README for the artifacts.
//!
//! Exit status: 0 success, 2 configuration or path error, 3 initialization
//! failure, 4 tracking failure (partial outputs are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deftrack::pipeline::{run_simulation, Frontend};
use deftrack::run::{self, RunConfig, TrackInput};
use deftrack::sim::{emit_observations, SceneTruth};
use deftrack::{io, Error, Result};

#[derive(Parser)]
#[command(name = "deftrack", version, about = "Monocular tracking of deforming scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run file (`[run]`, `[scene]`, `[pipeline]`); flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Seed for the simulator and RANSAC (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Log level: error, warn, info, debug, trace (overrides `run.log_level`).
    #[arg(long)]
    log: Option<String>,
}

#[derive(Args)]
struct SceneFlags {
    /// Deformation amplitude A (scene milli-units).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Deformation angular frequency ω (rad/s).
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Skip writing rendered frames.
    #[arg(long)]
    no_render: bool,
    /// Write every mesh vertex per frame as PLY.
    #[arg(long)]
    truth_ply: bool,
}

#[derive(Args)]
struct TrackFlags {
    /// Write the estimated cloud of every frame as PLY.
    #[arg(long)]
    clouds: bool,
    /// Write the joint-solve iteration log.
    #[arg(long)]
    solver_log: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrontendArg {
    Observations,
    Images,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a deforming tube and write frames, tracks and ground truth.
    Sim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneFlags,
    },
    /// Initialize and track a folder of frames or an observation table.
    Track {
        #[command(flatten)]
        common: Common,
        /// Folder of PGM/PNG frames, ordered by file name.
        #[arg(long, conflicts_with = "observations", required_unless_present = "observations")]
        images: Option<PathBuf>,
        /// Observation CSV (`frame,id,u,v`), e.g. from `sim`.
        #[arg(long)]
        observations: Option<PathBuf>,
        /// Calibration file.
        #[arg(long)]
        calib: PathBuf,
        /// Ground-truth poses giving the map scale (else `init.baseline`).
        #[arg(long)]
        truth_poses: Option<PathBuf>,
        #[command(flatten)]
        track: TrackFlags,
    },
    /// Score a tracking run against simulator ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Output directory of `sim` (reads truth_points.csv, truth_poses.csv).
        #[arg(long)]
        truth: PathBuf,
        /// Output directory of `track` (reads trajectories.csv, poses.csv).
        #[arg(long)]
        run: PathBuf,
    },
    /// Simulate, track and evaluate in one go; `--sweep` adds the A × ω grid.
    Full {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneFlags,
        #[command(flatten)]
        track: TrackFlags,
        #[arg(long, value_enum)]
        frontend: Option<FrontendArg>,
        #[arg(long)]
        sweep: bool,
        /// Threads for the sweep.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.run.seed = common.seed;
    }
    if let Some(l) = &common.log {
        cfg.run.log_level = l.clone();
    }
    Ok(cfg)
}

fn apply_scene(cfg: &mut RunConfig, s: &SceneFlags) {
    if let Some(a) = s.amplitude {
        cfg.scene.deformation.amplitude = a;
    }
    if let Some(w) = s.omega {
        cfg.scene.deformation.omega = w;
    }
    if let Some(f) = s.frames {
        cfg.scene.frames = f;
    }
    cfg.run.render_frames &= !s.no_render;
    cfg.run.write_truth_ply |= s.truth_ply;
}

fn apply_track(cfg: &mut RunConfig, t: &TrackFlags) {
    cfg.run.write_clouds |= t.clouds;
    cfg.run.solver_log |= t.solver_log;
}

fn init_logging(cfg: &RunConfig) {
    let level = run::log_level(&cfg.run.log_level).unwrap_or(log::LevelFilter::Warn);
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Path { path: p.into(), message: "no such directory".into() })
    }
}

fn tracking_status(result: &deftrack::pipeline::SequenceResult) -> Result<()> {
    match &result.failure {
        Some((frame, reason)) => Err(Error::TrackingFailed { frame: *frame, reason: reason.clone() }),
        None => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim { common, scene } => {
            let mut cfg = load_config(&common)?;
            apply_scene(&mut cfg, &scene);
            let cfg = cfg.resolve()?;
            init_logging(&cfg);
            let truth = SceneTruth::generate(&cfg.scene)?;
            let obs = emit_observations(&truth);
            run::write_sim_outputs(&common.out, &truth, &obs, &cfg.run)?;
            run::write_manifest(&common.out, "sim", &[], &cfg)?;
            println!("simulated {} frames, {} tracked points -> {}", cfg.scene.frames, truth.tracked_rest.len(), common.out.display());
            Ok(())
        }
        Command::Track { common, images, observations, calib, truth_poses, track } => {
            let mut cfg = load_config(&common)?;
            apply_track(&mut cfg, &track);
            let cfg = cfg.resolve()?;
            init_logging(&cfg);
            let text = std::fs::read_to_string(&calib).map_err(|e| Error::Path { path: calib.clone(), message: e.to_string() })?;
            let camera = io::calibration::parse(&text, &calib)?;
            let mut inputs = vec![("calibration".to_string(), calib.clone())];
            let input = match (&images, &observations) {
                (Some(dir), _) => {
                    require_dir(dir)?;
                    inputs.push(("images".into(), dir.clone()));
                    TrackInput::Images(dir)
                }
                (None, Some(p)) => {
                    inputs.push(("observations".into(), p.clone()));
                    TrackInput::Observations(p)
                }
                (None, None) => return Err(Error::config("images", "give --images or --observations")),
            };
            let gt = match &truth_poses {
                Some(p) => {
                    inputs.push(("truth_poses".into(), p.clone()));
                    Some(io::read_poses(p)?)
                }
                None => None,
            };
            let mut cfg = cfg;
            if images.is_some() {
                cfg.pipeline.frontend.kind = Frontend::Images;
            }
            let (result, tracks) = run::track(input, &camera, &cfg.pipeline, gt.as_deref())?;
            run::write_track_outputs(&common.out, &result, &tracks, &cfg.run)?;
            run::write_manifest(&common.out, "track", &inputs, &cfg)?;
            println!("tracked {} frames (initialized on 0 and {}) -> {}", result.frames.len(), result.init_frame, common.out.display());
            tracking_status(&result)
        }
        Command::Eval { common, truth, run: run_dir } => {
            let cfg = load_config(&common)?.resolve()?;
            init_logging(&cfg);
            require_dir(&truth)?;
            require_dir(&run_dir)?;
            let gt = io::read_points(&truth.join("truth_points.csv"))?;
            let est = io::read_points(&run_dir.join("trajectories.csv"))?;
            let (tp, ep) = (truth.join("truth_poses.csv"), run_dir.join("poses.csv"));
            let poses = if tp.is_file() && ep.is_file() { Some((io::read_poses(&ep)?, io::read_poses(&tp)?)) } else { None };
            let report = run::evaluate(&est, &gt, poses.as_ref().map(|(e, g)| (e.as_slice(), g.as_slice())))?;
            run::write_eval_outputs(&common.out, &report)?;
            run::write_manifest(&common.out, "eval", &[("truth".into(), truth), ("run".into(), run_dir)], &cfg)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Full { common, scene, track, frontend, sweep, workers } => {
            let mut cfg = load_config(&common)?;
            apply_scene(&mut cfg, &scene);
            apply_track(&mut cfg, &track);
            match frontend {
                Some(FrontendArg::Images) => cfg.pipeline.frontend.kind = Frontend::Images,
                Some(FrontendArg::Observations) => cfg.pipeline.frontend.kind = Frontend::Observations,
                None => {}
            }
            cfg.run.sweep |= sweep;
            if let Some(w) = workers {
                cfg.run.workers = w;
            }
            let cfg = cfg.resolve()?;
            init_logging(&cfg);
            let sim = run_simulation(&cfg.scene, &cfg.pipeline)?;
            run::write_sim_outputs(&common.out.join("sim"), &sim.truth, &sim.observations, &cfg.run)?;
            if cfg.pipeline.frontend.kind == Frontend::Images {
                // the image front end has its own ids: rewrite the truth table for them
                let rows: Vec<io::PointRow> = (0..cfg.scene.frames)
                    .flat_map(|f| sim.rest_of.iter().map(move |(id, r)| (*id, f, *r)))
                    .map(|(id, f, r)| io::PointRow::new(id, f, &sim.truth.rest_in_reference(&r, f, 0)))
                    .collect();
                io::write_points(&common.out.join("sim").join("truth_points.csv"), &rows)?;
            }
            let track_dir = common.out.join("track");
            run::write_track_outputs(&track_dir, &sim.result, &sim.image_history, &cfg.run)?;
            run::write_eval_outputs(&common.out.join("eval"), &sim.report)?;
            if cfg.run.sweep {
                run::run_sweep(&common.out.join("sweep"), &cfg)?;
                print!("{}", std::fs::read_to_string(common.out.join("sweep").join("trend.txt"))?);
            }
            run::write_manifest(&common.out, "full", &[], &cfg)?;
            print!("{}", sim.report.to_text());
            tracking_status(&sim.result)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deftrack: {e}");
            ExitCode::from(run::exit_code(&e) as u8)
        }
    }
}
