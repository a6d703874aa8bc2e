//! Sequence driver: initialization with frame-gap retry, then per-frame
//! deformable tracking, fed either by ideal observations or by the image
//! front end (detector + photometric tracker).

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::deform::{DeformTracker, TrackingParams};
use crate::error::{Error, Result};
use crate::eval::{absolute_trajectory_error, evaluate_frame, trend_report, EvalReport, FrameEval, TrendCell, TrendReport};
use crate::geometry::{CameraModel, Pose};
use crate::image::{detect_shi_tomasi, DetectorParams, ImageBuffer, Pyramid};
use crate::initializer::{initialize_map, InitParams};
use crate::io::TrackRow;
use crate::map::{Map, MapPoint, Observation};
use crate::nlls::IterationLog;
use crate::sim::{emit_observations, SceneConfig, SceneTruth};
use crate::tracker::{gate_outliers, refresh_patches, track_features, TrackedFeature, TrackerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Two-view essential-matrix initialization; the baseline is the unit.
    Monocular,
    /// Simulator only: anchors from true depths, map in scene units.
    GroundTruthDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frontend {
    /// Simulator tracks with known correspondence.
    Observations,
    /// Render (or load) frames and run the detector and photometric tracker.
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub mode: InitMode,
    /// Initialize from frames `(0, gap)`; on failure retry with `gap + 1`.
    pub gap: usize,
    pub max_gap: usize,
    /// Scene milli-units covered by the initialization baseline when no
    /// ground truth provides it (real sequences).
    pub baseline: f64,
    /// Graph influence radius after ground-truth-depth initialization.
    pub ground_truth_graph_sigma: f64,
    #[serde(flatten)]
    pub params: InitParams,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mode: InitMode::Monocular,
            gap: 3,
            max_gap: 20,
            baseline: 1.0,
            ground_truth_graph_sigma: 55.0,
            params: InitParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub kind: Frontend,
    pub pyramid_levels: usize,
    pub detector: DetectorParams,
    pub tracker: TrackerParams,
    /// Maximum number of features seeded on the reference frame.
    pub max_features: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            kind: Frontend::Observations,
            pyramid_levels: 4,
            detector: DetectorParams::default(),
            tracker: TrackerParams::default(),
            max_features: 300,
        }
    }
}

/// Everything that shapes a tracking run except the input data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub init: InitConfig,
    pub tracking: TrackingParams,
    pub frontend: FrontendConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracking.validate()?;
        if self.init.gap == 0 || self.init.max_gap < self.init.gap {
            return Err(Error::config("init.gap", "need 1 ≤ gap ≤ max_gap"));
        }
        if !(self.init.baseline > 0.0) {
            return Err(Error::config("init.baseline", "must be positive"));
        }
        if !(self.init.ground_truth_graph_sigma > 0.0) {
            return Err(Error::config("init.ground_truth_graph_sigma", "must be positive"));
        }
        if self.init.params.ransac_iterations == 0 {
            return Err(Error::config("init.ransac_iterations", "must be positive"));
        }
        if !(self.init.params.inlier_threshold_px > 0.0) {
            return Err(Error::config("init.inlier_threshold_px", "must be positive"));
        }
        let t = &self.frontend.tracker;
        if t.patch_size < 3 || t.patch_size % 2 == 0 {
            return Err(Error::config("frontend.tracker.patch_size", "must be odd and ≥ 3"));
        }
        if !(0.0..=1.0).contains(&t.ssim_threshold) {
            return Err(Error::config("frontend.tracker.ssim_threshold", "must lie in [0, 1]"));
        }
        if self.frontend.pyramid_levels == 0 {
            return Err(Error::config("frontend.pyramid_levels", "must be at least 1"));
        }
        Ok(())
    }
}

/// Estimated state after one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    /// `T_{C^t W}`, world = reference camera.
    pub pose: Pose,
    /// Active points after the frame, `(id, position)` in map units.
    pub points: Vec<(usize, Vector3<f64>)>,
    pub median_delta: f64,
    pub runtime_ms: f64,
    pub flagged: bool,
    pub iterations: usize,
    /// Joint-solve iterations, filled when `tracking.solver.log` is set.
    pub solver_log: Vec<IterationLog>,
}

/// Output of a run; `failure` is set when tracking stopped early, in which
/// case `frames` holds everything up to the failing frame.
#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub init_frame: usize,
    pub relative: Pose,
    pub initial_map: Map,
    /// Scene milli-units per map unit used for the regularizers.
    pub scene_scale: f64,
    pub frames: Vec<FrameRecord>,
    pub final_map: Map,
    pub failure: Option<(usize, String)>,
}

impl SequenceResult {
    pub fn poses(&self) -> Vec<(usize, Pose)> {
        self.frames.iter().map(|f| (f.index, f.pose)).collect()
    }

    /// Estimated point positions keyed by frame, then id.
    pub fn point_table(&self) -> BTreeMap<usize, BTreeMap<usize, Vector3<f64>>> {
        self.frames.iter().map(|f| (f.index, f.points.iter().copied().collect())).collect()
    }
}

/// How map units relate to scene milli-units.
#[derive(Clone, Copy)]
pub enum ScaleSource<'a> {
    /// Scene milli-units spanned by the baseline between frame 0 and frame `k`.
    Baseline(&'a dyn Fn(usize) -> f64),
    Fixed(f64),
}

/// Ground-truth depth oracle: position of point `id` in the reference
/// camera frame, in scene units.
pub type DepthOracle<'a> = &'a dyn Fn(usize) -> Option<Vector3<f64>>;

fn initialize(
    observations: &[Vec<Observation>],
    camera: &CameraModel,
    cfg: &PipelineConfig,
    scale: ScaleSource,
    depth: Option<DepthOracle>,
) -> Result<(usize, Pose, Map, TrackingParams)> {
    let mut tracking = cfg.tracking.clone();
    if cfg.init.mode == InitMode::GroundTruthDepth {
        let oracle = depth.ok_or_else(|| Error::config("init.mode", "ground-truth-depth needs a simulated scene"))?;
        let pts: Vec<MapPoint> = observations
            .first()
            .into_iter()
            .flatten()
            .filter_map(|o| oracle(o.id).map(|x| MapPoint::new(o.id, x, o.px)))
            .collect();
        if pts.len() < cfg.init.params.min_points {
            return Err(Error::InitializationFailed(format!("{} points with known depth", pts.len())));
        }
        tracking.scene_scale = 1.0;
        tracking.graph_sigma = cfg.init.ground_truth_graph_sigma;
        return Ok((0, Pose::identity(), Map::new(pts), tracking));
    }
    let mut last_err = Error::InitializationFailed("sequence too short for initialization".into());
    for gap in cfg.init.gap..=cfg.init.max_gap {
        if gap >= observations.len() {
            break;
        }
        match initialize_map(&observations[0], &observations[gap], camera, &cfg.init.params) {
            Ok(init) => {
                tracking.scene_scale = match scale {
                    ScaleSource::Baseline(f) => f(gap),
                    ScaleSource::Fixed(s) => s,
                };
                log::info!("initialized on frames (0, {gap}); {:.4} scene units per map unit", tracking.scene_scale);
                return Ok((gap, init.relative, init.map, tracking));
            }
            Err(e) => {
                log::info!("initialization with gap {gap} failed: {e}");
                last_err = e;
            }
        }
    }
    Err(last_err)
}

/// Initializes on the first frames and tracks the rest. Frame 0 is the
/// reference (world) frame.
pub fn run_tracking(
    observations: &[Vec<Observation>],
    camera: &CameraModel,
    cfg: &PipelineConfig,
    scale: ScaleSource,
    depth: Option<DepthOracle>,
) -> Result<SequenceResult> {
    cfg.validate()?;
    let (init_frame, relative, map, tracking) = initialize(observations, camera, cfg, scale, depth)?;
    let mut tracker = DeformTracker::new(camera.clone(), tracking.clone(), map.clone(), 0)?;
    let mut frames = vec![FrameRecord {
        index: 0,
        pose: Pose::identity(),
        points: map.active().map(|p| (p.id, p.position())).collect(),
        median_delta: 0.0,
        runtime_ms: 0.0,
        flagged: false,
        iterations: 0,
        solver_log: Vec::new(),
    }];
    let mut failure = None;
    for (f, obs) in observations.iter().enumerate().skip(1) {
        let start = Instant::now();
        match tracker.track_frame(f, obs) {
            Ok(state) => {
                frames.push(FrameRecord {
                    index: f,
                    pose: state.pose,
                    points: tracker.map.active().map(|p| (p.id, p.position())).collect(),
                    median_delta: state.median_delta_norm(),
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                    flagged: state.flagged,
                    iterations: state.summary.as_ref().map_or(0, |s| s.iterations),
                    solver_log: state.summary.map(|s| s.log).unwrap_or_default(),
                });
            }
            Err(e) => {
                log::error!("{e}");
                let reason = match e {
                    Error::TrackingFailed { reason, .. } => reason,
                    other => other.to_string(),
                };
                failure = Some((f, reason));
                break;
            }
        }
    }
    Ok(SequenceResult { init_frame, relative, initial_map: map, scene_scale: tracking.scene_scale, frames, final_map: tracker.map, failure })
}

/// Image front end: seeds features on the first frame and tracks them,
/// returning per-frame gated observations. `frames` are consumed in order.
pub struct ImageFrontend {
    pub config: FrontendConfig,
    features: Vec<TrackedFeature>,
    frame: usize,
    /// Every feature's state after every frame, for the track dump.
    pub history: Vec<TrackRow>,
}

impl ImageFrontend {
    pub fn new(config: FrontendConfig) -> Self {
        Self { config, features: Vec::new(), frame: 0, history: Vec::new() }
    }

    pub fn features(&self) -> &[TrackedFeature] {
        &self.features
    }

    pub fn process(&mut self, image: &ImageBuffer) -> Result<Vec<Observation>> {
        let pyr = Pyramid::build(image, self.config.pyramid_levels)?;
        if self.frame == 0 {
            let mut kps = detect_shi_tomasi(&pyr, &self.config.detector);
            kps.truncate(self.config.max_features);
            self.features = kps
                .iter()
                .enumerate()
                .map(|(id, k)| TrackedFeature::new(id, &pyr, k.position, self.config.tracker.patch_size))
                .collect();
        } else {
            track_features(&pyr, &mut self.features, &self.config.tracker);
            gate_outliers(&pyr, &mut self.features, self.config.tracker.ssim_threshold);
            refresh_patches(&pyr, &mut self.features, self.config.tracker.refresh_period);
        }
        self.history.extend(self.features.iter().map(|f| TrackRow::new(self.frame, f)));
        self.frame += 1;
        Ok(self.features.iter().filter(|f| f.is_tracked()).map(|f| Observation::new(f.id, f.current_px)).collect())
    }
}

/// Simulated run: ground truth, observations, tracking and evaluation.
/// `image_history` holds the image front end's track dump (empty for ideal
/// observations).
pub struct SimRun {
    pub truth: SceneTruth,
    pub observations: Vec<Vec<Observation>>,
    pub result: SequenceResult,
    pub report: EvalReport,
    /// Rest coordinate of each tracked id (image front end ids differ from
    /// the simulator's tracked points).
    pub rest_of: BTreeMap<usize, Vector3<f64>>,
    pub image_history: Vec<TrackRow>,
}

/// Generates `scene`, produces observations with the configured front end,
/// tracks, and scores every frame against ground truth.
pub fn run_simulation(scene: &SceneConfig, cfg: &PipelineConfig) -> Result<SimRun> {
    let truth = SceneTruth::generate(scene)?;
    let camera = truth.camera();
    let mut image_history = Vec::new();
    let (observations, rest_of) = match cfg.frontend.kind {
        Frontend::Observations => {
            (emit_observations(&truth), truth.tracked_rest.iter().copied().enumerate().collect::<BTreeMap<_, _>>())
        }
        Frontend::Images => {
            let mut fe = ImageFrontend::new(cfg.frontend.clone());
            let mut obs = Vec::with_capacity(scene.frames);
            let mut rest_of = BTreeMap::new();
            for f in 0..scene.frames {
                let r = truth.render_frame(f);
                let o = fe.process(&r.image)?;
                if f == 0 {
                    for ob in &o {
                        let (x, y) = (ob.px.x.round() as usize, ob.px.y.round() as usize);
                        // surface point under the (sub-pixel) feature: interpolate via
                        // the nearest pixel centre's rest coordinate
                        if let Some(rest) = r.surface_at(x.min(r.image.width - 1), y.min(r.image.height - 1)) {
                            rest_of.insert(ob.id, rest);
                        }
                    }
                }
                obs.push(o);
            }
            image_history = fe.history;
            (obs, rest_of)
        }
    };
    let baseline = |k: usize| (truth.poses[k].center() - truth.poses[0].center()).norm();
    let oracle = |id: usize| rest_of.get(&id).map(|r| truth.rest_in_reference(r, 0, 0));
    let result = run_tracking(&observations, &camera, cfg, ScaleSource::Baseline(&baseline), Some(&oracle))?;
    let report = evaluate_sequence(&truth, &result, &rest_of)?;
    Ok(SimRun { truth, observations, result, report, rest_of, image_history })
}

/// Scale-aligned per-frame RMSE of every recorded frame, plus the ATE of the
/// camera centres.
pub fn evaluate_sequence(truth: &SceneTruth, result: &SequenceResult, rest_of: &BTreeMap<usize, Vector3<f64>>) -> Result<EvalReport> {
    let mut frames = Vec::with_capacity(result.frames.len());
    for rec in &result.frames {
        let mut est = Vec::with_capacity(rec.points.len());
        let mut gt = Vec::with_capacity(rec.points.len());
        for (id, x) in &rec.points {
            if let Some(rest) = rest_of.get(id) {
                est.push(*x);
                gt.push(truth.rest_in_reference(rest, rec.index, 0));
            }
        }
        let mut fe: FrameEval = evaluate_frame(rec.index, &est, &gt)?;
        fe.median_delta = rec.median_delta * fe.scale;
        fe.runtime_ms = rec.runtime_ms;
        frames.push(fe);
    }
    let est_c: Vec<Vector3<f64>> = result.frames.iter().map(|f| f.pose.center()).collect();
    let gt_c: Vec<Vector3<f64>> = result.frames.iter().map(|f| truth.relative_pose(f.index, 0).center()).collect();
    let ate = absolute_trajectory_error(&est_c, &gt_c).ok();
    Ok(EvalReport::from_frames(frames, ate))
}

/// Amplitudes of the deformation grid (scene milli-units).
pub const GRID_AMPLITUDES: [f64; 4] = [0.0, 2.5, 5.0, 10.0];
/// Angular frequencies of the deformation grid (rad/s).
pub const GRID_OMEGAS: [f64; 3] = [0.0, 2.5, 5.0];
/// Scene seeds averaged per grid cell by default.
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [1, 2, 3];

/// One simulated run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    /// Sequence RMSE over the recorded frames; NaN if initialization failed.
    pub rmse: f64,
    pub frames: usize,
    /// Frame at which tracking stopped early, if it did.
    pub failed_at: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub amplitude: f64,
    pub omega: f64,
    pub runs: Vec<SweepRun>,
}

impl SweepCell {
    /// Mean sequence RMSE over the seeds (NaN if any run failed to initialize).
    pub fn mean_rmse(&self) -> f64 {
        self.runs.iter().map(|r| r.rmse).sum::<f64>() / self.runs.len().max(1) as f64
    }
}

fn sweep_run(scene: &SceneConfig, cfg: &PipelineConfig, seed: u64) -> SweepRun {
    let mut scene = scene.clone();
    scene.seed = seed;
    match run_simulation(&scene, cfg) {
        Ok(run) => SweepRun {
            seed,
            rmse: run.report.sequence_rmse,
            frames: run.result.frames.len(),
            failed_at: run.result.failure.as_ref().map(|f| f.0),
            error: run.result.failure.map(|f| f.1),
        },
        Err(e) => SweepRun { seed, rmse: f64::NAN, frames: 0, failed_at: None, error: Some(e.to_string()) },
    }
}

/// Runs `scene` for every `(amplitude, omega)` cell and every seed, spread
/// over `workers` threads. Results do not depend on the worker count.
pub fn trend_sweep(
    scene: &SceneConfig,
    cfg: &PipelineConfig,
    amplitudes: &[f64],
    omegas: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Vec<SweepCell> {
    let mut jobs = Vec::new();
    for &a in amplitudes {
        for &w in omegas {
            for &seed in seeds {
                let mut s = scene.clone();
                s.deformation.amplitude = a;
                s.deformation.omega = w;
                jobs.push((s, seed));
            }
        }
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<SweepRun>>> = jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|sc| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((s, seed)) = jobs.get(i) else { break };
                let r = sweep_run(s, cfg, *seed);
                *results[i].lock().expect("unpoisoned") = Some(r);
            });
        }
    });
    let mut runs = results.into_iter().map(|m| m.into_inner().expect("unpoisoned").expect("job ran"));
    let mut cells = Vec::new();
    for &a in amplitudes {
        for &w in omegas {
            cells.push(SweepCell { amplitude: a, omega: w, runs: runs.by_ref().take(seeds.len()).collect() });
        }
    }
    cells
}

/// Seed-averaged trend table and ordering verdicts of a sweep.
pub fn sweep_report(cells: &[SweepCell]) -> TrendReport {
    let tc: Vec<TrendCell> = cells.iter().map(|c| TrendCell { amplitude: c.amplitude, omega: c.omega, rmse: c.mean_rmse() }).collect();
    trend_report(&tc)
}
