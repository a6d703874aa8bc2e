//! End-to-end runs: the resolved run configuration, artifact writers and the
//! run manifest. The `deftrack` binary is a thin argument parser over this.
//!
//! Precedence, lowest to highest: built-in defaults, the TOML run file,
//! command-line flags. `run.seed`, when set, replaces both `scene.seed` and
//! `pipeline.init.seed`.
//!
//! ```toml
//! [run]
//! seed = 7
//! render_frames = true
//! write_clouds = false
//!
//! [scene.deformation]
//! amplitude = 5.0
//! omega = 2.5
//!
//! [pipeline.tracking]
//! k = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{absolute_trajectory_error, evaluate_clouds, EvalReport, FrameClouds};
use crate::geometry::{CameraModel, Pose};
use crate::image::{list_frames, ImageBuffer};
use crate::io::{self, IterationRow, PointRow, TrackRow};
use crate::map::Observation;
use crate::pipeline::{
    run_tracking, sweep_report, trend_sweep, ImageFrontend, PipelineConfig, ScaleSource, SequenceResult, SweepCell,
    DEFAULT_SWEEP_SEEDS, GRID_AMPLITUDES, GRID_OMEGAS,
};
use crate::sim::SceneConfig;
use crate::sim::SceneTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Threads used by the deformation sweep.
    pub workers: usize,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log_level: String,
    /// Write rendered frames in `sim` / `full`.
    pub render_frames: bool,
    /// Write one PLY of all mesh vertices per frame in `sim` / `full`.
    pub write_truth_ply: bool,
    /// Write one PLY of the estimated cloud per frame.
    pub write_clouds: bool,
    /// Write the joint-solve iteration log (turns on `tracking.solver.log`).
    pub solver_log: bool,
    /// Run the amplitude × frequency sweep in `full`.
    pub sweep: bool,
    pub sweep_seeds: Vec<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            workers: 1,
            log_level: "warn".into(),
            render_frames: true,
            write_truth_ply: false,
            write_clouds: false,
            solver_log: false,
            sweep: false,
            sweep_seeds: DEFAULT_SWEEP_SEEDS.to_vec(),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunOptions,
    pub scene: SceneConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::Parse { path: path.into(), line, message: e.message().to_string() }
        })
    }

    /// Applies `run.seed` and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(seed) = self.run.seed {
            self.scene.seed = seed;
            self.pipeline.init.params.seed = seed;
        }
        self.pipeline.tracking.solver.log |= self.run.solver_log;
        self.scene.validate()?;
        self.pipeline.validate()?;
        if self.run.workers == 0 {
            return Err(Error::config("run.workers", "must be at least 1"));
        }
        if self.run.sweep_seeds.is_empty() {
            return Err(Error::config("run.sweep_seeds", "need at least one seed"));
        }
        if log_level(&self.run.log_level).is_none() {
            return Err(Error::config("run.log_level", format!("unknown level `{}`", self.run.log_level)));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

pub fn log_level(name: &str) -> Option<log::LevelFilter> {
    name.parse().ok()
}

/// Process exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Path { .. } => 2,
        Error::InitializationFailed(_) => 3,
        Error::TrackingFailed { .. } | Error::SolverFailed(_) => 4,
        _ => 1,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Path { path: dir.into(), message: e.to_string() })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    inputs: &'a [(String, PathBuf)],
    config: &'a RunConfig,
}

/// `manifest.json`: tool version, command, input paths and the resolved
/// configuration (seeds included).
pub fn write_manifest(dir: &Path, command: &str, inputs: &[(String, PathBuf)], cfg: &RunConfig) -> Result<()> {
    let m = Manifest { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, inputs, config: cfg };
    write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m).expect("manifest serializes"))
}

/// Ground truth of a simulated sequence:
///
/// - `calibration.txt`, `scene.toml`
/// - `truth_poses.csv`: `T_{C^f C^0}` per frame (the estimator's world is camera 0)
/// - `truth_points.csv`: every tracked point at every frame, camera-0 frame
/// - `observations.csv`: the simulated tracks
/// - `frames/frame_NNNN.png` (optional), `truth/vertices_NNNN.ply` (optional)
pub fn write_sim_outputs(dir: &Path, truth: &SceneTruth, observations: &[Vec<Observation>], opts: &RunOptions) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("calibration.txt"), &io::calibration::to_string(&truth.camera()))?;
    write_text(&dir.join("scene.toml"), &truth.config.to_toml())?;
    let poses: Vec<(usize, Pose)> = (0..truth.poses.len()).map(|f| (f, truth.relative_pose(f, 0))).collect();
    io::write_poses(&dir.join("truth_poses.csv"), &poses)?;
    let mut rows = Vec::with_capacity(truth.tracked_rest.len() * truth.poses.len());
    for f in 0..truth.poses.len() {
        for id in 0..truth.tracked_rest.len() {
            rows.push(PointRow::new(id, f, &truth.tracked_in_reference(id, f, 0)));
        }
    }
    io::write_points(&dir.join("truth_points.csv"), &rows)?;
    io::write_observations(&dir.join("observations.csv"), observations)?;
    if opts.render_frames {
        let frames = dir.join("frames");
        create_dir(&frames)?;
        for f in 0..truth.poses.len() {
            truth.render_frame(f).image.save(&frames.join(format!("frame_{f:04}.png")))?;
        }
    }
    if opts.write_truth_ply {
        let ply = dir.join("truth");
        create_dir(&ply)?;
        for f in 0..truth.poses.len() {
            let pts: Vec<_> = truth.vertices(f).iter().map(|v| (None, truth.poses[0].transform(v))).collect();
            io::write_ply(&ply.join(format!("vertices_{f:04}.ply")), &pts)?;
        }
    }
    Ok(())
}

/// Tracking artifacts:
///
/// - `poses.csv`: `T_{C^t W}` per tracked frame
/// - `relative_pose.csv`: the initialization pose, one row
/// - `initial_map.ply`: triangulated points with ids
/// - `trajectories.csv`: every active point at every frame
/// - `tracks.csv`: photometric tracker dump (image input only)
/// - `clouds/cloud_NNNN.ply`, `solver_log.csv` (optional)
pub fn write_track_outputs(dir: &Path, result: &SequenceResult, tracks: &[TrackRow], opts: &RunOptions) -> Result<()> {
    create_dir(dir)?;
    io::write_poses(&dir.join("poses.csv"), &result.poses())?;
    io::write_poses(&dir.join("relative_pose.csv"), &[(result.init_frame, result.relative)])?;
    let init: Vec<_> = result.initial_map.points.iter().map(|p| (Some(p.id), p.anchor)).collect();
    io::write_ply(&dir.join("initial_map.ply"), &init)?;
    let rows: Vec<PointRow> =
        result.frames.iter().flat_map(|f| f.points.iter().map(move |(id, x)| PointRow::new(*id, f.index, x))).collect();
    io::write_points(&dir.join("trajectories.csv"), &rows)?;
    if !tracks.is_empty() {
        io::write_csv(&dir.join("tracks.csv"), tracks)?;
    }
    if opts.write_clouds {
        let clouds = dir.join("clouds");
        create_dir(&clouds)?;
        for f in &result.frames {
            let pts: Vec<_> = f.points.iter().map(|(id, x)| (Some(*id), *x)).collect();
            io::write_ply(&clouds.join(format!("cloud_{:04}.ply", f.index)), &pts)?;
        }
    }
    if opts.solver_log {
        let rows: Vec<IterationRow> =
            result.frames.iter().flat_map(|f| f.solver_log.iter().map(move |l| IterationRow::new(f.index, l))).collect();
        io::write_csv(&dir.join("solver_log.csv"), &rows)?;
    }
    Ok(())
}

/// `eval.csv`, `eval_long.csv` and `eval.txt`.
pub fn write_eval_outputs(dir: &Path, report: &EvalReport) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("eval.csv"), &report.to_csv())?;
    write_text(&dir.join("eval_long.csv"), &report.to_long_csv())?;
    write_text(&dir.join("eval.txt"), &report.to_text())
}

/// Input of a `track` run.
pub enum TrackInput<'a> {
    /// Folder of PGM/PNG frames, tracked with the photometric front end.
    Images(&'a Path),
    /// Observation CSV (`frame, id, u, v`).
    Observations(&'a Path),
}

/// Loads the input, initializes and tracks. The map scale comes from the
/// camera centres of `truth_poses` when given, else from `init.baseline`.
pub fn track(
    input: TrackInput,
    camera: &CameraModel,
    cfg: &PipelineConfig,
    truth_poses: Option<&[(usize, Pose)]>,
) -> Result<(SequenceResult, Vec<TrackRow>)> {
    let (observations, tracks) = match input {
        TrackInput::Images(dir) => {
            let files = list_frames(dir)?;
            if files.is_empty() {
                return Err(Error::Path { path: dir.into(), message: "no .pgm or .png frames".into() });
            }
            let mut fe = ImageFrontend::new(cfg.frontend.clone());
            let mut obs = Vec::with_capacity(files.len());
            for (i, f) in files.iter().enumerate() {
                let mut img = ImageBuffer::load(f)?;
                img.index = i;
                if img.width != camera.width || img.height != camera.height {
                    return Err(Error::config(
                        "calibration",
                        format!("{}: {}x{} image, calibration is {}x{}", f.display(), img.width, img.height, camera.width, camera.height),
                    ));
                }
                obs.push(fe.process(&img)?);
            }
            (obs, fe.history)
        }
        TrackInput::Observations(path) => (io::read_observations(path)?, Vec::new()),
    };
    let centre = |k: usize| {
        truth_poses.and_then(|p| {
            let c = |f: usize| p.iter().find(|q| q.0 == f).map(|q| q.1.center());
            Some((c(k)? - c(0)?).norm())
        })
    };
    if truth_poses.is_some() && centre(0).is_none() {
        return Err(Error::config("truth_poses", "frame 0 is missing"));
    }
    let from_truth = |k: usize| centre(k).unwrap_or(f64::NAN);
    let scale = match truth_poses {
        Some(_) => ScaleSource::Baseline(&from_truth),
        None => ScaleSource::Fixed(cfg.init.baseline),
    };
    let result = run_tracking(&observations, camera, cfg, scale, None)?;
    Ok((result, tracks))
}

/// Scores an estimated trajectory table against a truth table, with the
/// camera-centre ATE when both pose files are at hand.
pub fn evaluate(
    estimated: &FrameClouds,
    truth: &FrameClouds,
    poses: Option<(&[(usize, Pose)], &[(usize, Pose)])>,
) -> Result<EvalReport> {
    let frames = evaluate_clouds(estimated, truth)?;
    let ate = poses.and_then(|(est, gt)| {
        let (a, b): (Vec<_>, Vec<_>) =
            est.iter().filter_map(|(f, p)| gt.iter().find(|g| g.0 == *f).map(|g| (p.center(), g.1.center()))).unzip();
        absolute_trajectory_error(&a, &b).ok()
    });
    Ok(EvalReport::from_frames(frames, ate))
}

/// `trend.txt` (table + verdicts) and `trend.csv` (one row per run).
pub fn run_sweep(dir: &Path, cfg: &RunConfig) -> Result<Vec<SweepCell>> {
    create_dir(dir)?;
    let cells = trend_sweep(&cfg.scene, &cfg.pipeline, &GRID_AMPLITUDES, &GRID_OMEGAS, &cfg.run.sweep_seeds, cfg.run.workers);
    let report = sweep_report(&cells);
    let mut text = report.table.clone();
    for (desc, ok) in &report.verdicts {
        text.push_str(&format!("{} {desc}\n", if *ok { "PASS" } else { "FAIL" }));
    }
    write_text(&dir.join("trend.txt"), &text)?;
    #[derive(Serialize)]
    struct Row<'a> {
        amplitude: f64,
        omega: f64,
        seed: u64,
        rmse: f64,
        frames: usize,
        failed_at: Option<usize>,
        error: Option<&'a str>,
    }
    let rows: Vec<Row> = cells
        .iter()
        .flat_map(|c| {
            c.runs.iter().map(move |r| Row {
                amplitude: c.amplitude,
                omega: c.omega,
                seed: r.seed,
                rmse: r.rmse,
                frames: r.frames,
                failed_at: r.failed_at,
                error: r.error.as_deref(),
            })
        })
        .collect();
    io::write_csv(&dir.join("trend.csv"), &rows)?;
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_overrides_sections() {
        let cfg = RunConfig::from_toml("[run]\nseed = 9\n[scene]\nseed = 2\n").unwrap().resolve().unwrap();
        assert_eq!(cfg.scene.seed, 9);
        assert_eq!(cfg.pipeline.init.params.seed, 9);
    }

    #[test]
    fn unknown_field_is_a_config_error() {
        let e = RunConfig::from_toml("[pipeline.tracking]\nkay = 3\n").unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("kay"), "{e}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default().resolve().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InitializationFailed("x".into())), 3);
        assert_eq!(exit_code(&Error::TrackingFailed { frame: 3, reason: "x".into() }), 4);
        assert_eq!(exit_code(&Error::Path { path: "x".into(), message: "y".into() }), 2);
    }
}
