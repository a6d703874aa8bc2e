//! Photometric feature tracking.
//!
//! Each feature keeps a reference patch per pyramid level. Tracking solves
//! for the displacement `d`, gain `α` and bias `β` minimizing
//! `Σ_v (I_ref(v) − α I_cur(v + d) − β)²` over the patch, coarse to fine, with
//! a 4-parameter Gauss-Newton iteration and bilinear sampling. Tracks are then
//! gated by SSIM between the reference and tracked patches.

use nalgebra::{Matrix4, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, Pyramid};

pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Odd patch side, identical at every level.
    pub patch_size: usize,
    pub max_iterations: usize,
    /// Gauss-Newton stops once the displacement update is below this (pixels).
    pub convergence: f64,
    /// Upper bound on the condition number of the Jacobi-scaled normal matrix.
    pub max_condition: f64,
    pub ssim_threshold: f64,
    pub refresh_period: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            patch_size: 11,
            max_iterations: 30,
            convergence: 0.01,
            max_condition: 1e8,
            ssim_threshold: 0.8,
            refresh_period: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tracked,
    Lost,
    Rejected,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackStatus::Tracked => "tracked",
            TrackStatus::Lost => "lost",
            TrackStatus::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackedFeature {
    pub id: usize,
    /// Reference patches, one per pyramid level, row-major `patch_size²`.
    pub patches: Vec<Vec<f64>>,
    pub patch_size: usize,
    pub reference_px: Vector2<f64>,
    pub current_px: Vector2<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub ssim: f64,
    pub status: TrackStatus,
    pub frames_since_refresh: usize,
}

impl TrackedFeature {
    pub fn new(id: usize, pyramid: &Pyramid, px: Vector2<f64>, patch_size: usize) -> Self {
        assert!(patch_size % 2 == 1, "patch side must be odd");
        Self {
            id,
            patches: sample_reference(pyramid, &px, patch_size),
            patch_size,
            reference_px: px,
            current_px: px,
            alpha: 1.0,
            beta: 0.0,
            ssim: 1.0,
            status: TrackStatus::Tracked,
            frames_since_refresh: 0,
        }
    }

    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }

    pub fn displacement(&self) -> Vector2<f64> {
        self.current_px - self.reference_px
    }
}

fn sample_reference(pyramid: &Pyramid, px: &Vector2<f64>, patch_size: usize) -> Vec<Vec<f64>> {
    pyramid
        .levels
        .iter()
        .enumerate()
        .map(|(l, lvl)| sample_patch(&lvl.image, &(px / (1u32 << l) as f64), patch_size))
        .collect()
}

/// Bilinear patch of side `patch_size` centred on `center`.
pub fn sample_patch(img: &ImageBuffer, center: &Vector2<f64>, patch_size: usize) -> Vec<f64> {
    let h = (patch_size / 2) as isize;
    let mut out = Vec::with_capacity(patch_size * patch_size);
    for oy in -h..=h {
        for ox in -h..=h {
            out.push(img.sample(center.x + ox as f64, center.y + oy as f64));
        }
    }
    out
}

enum LevelOutcome {
    Converged,
    NotConverged,
    Lost,
}

struct LkState {
    d: Vector2<f64>,
    alpha: f64,
    beta: f64,
}

fn patch_inside(img: &ImageBuffer, center: &Vector2<f64>, half: f64) -> bool {
    center.x - half >= 0.0
        && center.y - half >= 0.0
        && center.x + half <= (img.width - 1) as f64
        && center.y + half <= (img.height - 1) as f64
}

fn track_level(
    pyramid: &Pyramid,
    level: usize,
    reference: &[f64],
    ref_center: &Vector2<f64>,
    state: &mut LkState,
    params: &TrackerParams,
) -> LevelOutcome {
    let lvl = &pyramid.levels[level];
    let h = (params.patch_size / 2) as isize;
    let half = h as f64;
    for _ in 0..params.max_iterations {
        let center = ref_center + state.d;
        let inside = patch_inside(&lvl.image, &center, half);
        if level == 0 && !inside {
            return LevelOutcome::Lost;
        }
        if !(center.x >= 0.0 && center.y >= 0.0 && center.x < lvl.image.width as f64 && center.y < lvl.image.height as f64) {
            return LevelOutcome::Lost;
        }
        let mut hess = Matrix4::<f64>::zeros();
        let mut grad = Vector4::<f64>::zeros();
        let mut k = 0;
        for oy in -h..=h {
            for ox in -h..=h {
                let (x, y) = (center.x + ox as f64, center.y + oy as f64);
                let i = lvl.image.sample(x, y);
                let gx = lvl.grad_x.sample(x, y);
                let gy = lvl.grad_y.sample(x, y);
                let r = reference[k] - state.alpha * i - state.beta;
                let j = Vector4::new(-state.alpha * gx, -state.alpha * gy, -i, -1.0);
                hess += j * j.transpose();
                grad += j * r;
                k += 1;
            }
        }
        // conditioning measured after Jacobi scaling so parameter units do not matter
        let diag = hess.diagonal();
        if diag.iter().any(|v| *v <= 0.0) {
            return LevelOutcome::Lost;
        }
        let s = diag.map(|v| 1.0 / v.sqrt());
        let scaled = Matrix4::from_fn(|r, c| hess[(r, c)] * s[r] * s[c]);
        let eig = SymmetricEigen::new(scaled).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo <= 0.0 || hi / lo > params.max_condition {
            return LevelOutcome::Lost;
        }
        let Some(step) = hess.cholesky().map(|c| c.solve(&(-grad))) else {
            return LevelOutcome::Lost;
        };
        state.d += Vector2::new(step[0], step[1]);
        state.alpha += step[2];
        state.beta += step[3];
        if !(state.alpha.is_finite() && state.alpha > 0.0) {
            return LevelOutcome::Lost;
        }
        if step[0].hypot(step[1]) < params.convergence {
            return LevelOutcome::Converged;
        }
    }
    LevelOutcome::NotConverged
}

/// Tracks one feature into `current`. Returns false when the track is lost.
pub fn track_feature(current: &Pyramid, feature: &mut TrackedFeature, params: &TrackerParams) -> bool {
    let levels = current.num_levels().min(feature.patches.len());
    let mut state = LkState { d: feature.displacement(), alpha: feature.alpha, beta: feature.beta };
    for level in (0..levels).rev() {
        let scale = 1.0 / (1u32 << level) as f64;
        let mut lvl_state = LkState { d: state.d * scale, alpha: state.alpha, beta: state.beta };
        let outcome = track_level(current, level, &feature.patches[level], &(feature.reference_px * scale), &mut lvl_state, params);
        match outcome {
            LevelOutcome::Lost => return false,
            LevelOutcome::NotConverged if level == 0 => return false,
            _ => {}
        }
        state = LkState { d: lvl_state.d / scale, alpha: lvl_state.alpha, beta: lvl_state.beta };
    }
    feature.current_px = feature.reference_px + state.d;
    feature.alpha = state.alpha;
    feature.beta = state.beta;
    true
}

/// Tracks every live feature into `current`; failures become `Lost`.
pub fn track_features(current: &Pyramid, features: &mut [TrackedFeature], params: &TrackerParams) {
    for f in features.iter_mut().filter(|f| f.is_tracked()) {
        if !track_feature(current, f, params) {
            f.status = TrackStatus::Lost;
        }
    }
}

/// Structural similarity of two equally sized windows, with population
/// statistics.
pub fn ssim(x: &[f64], y: &[f64], c1: f64, c2: f64) -> f64 {
    assert_eq!(x.len(), y.len(), "SSIM windows must have equal size");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Rejects live features whose tracked patch differs structurally from the
/// reference. Stores the score on every evaluated feature.
pub fn gate_outliers(current: &Pyramid, features: &mut [TrackedFeature], threshold: f64) {
    let img = current.base();
    for f in features.iter_mut().filter(|f| f.is_tracked()) {
        let patch = sample_patch(img, &f.current_px, f.patch_size);
        f.ssim = ssim(&f.patches[0], &patch, SSIM_C1, SSIM_C2);
        if f.ssim < threshold {
            f.status = TrackStatus::Rejected;
        }
    }
}

/// Advances each live feature's refresh counter and re-samples the reference
/// patches at the current position once it reaches `period`. Gain and bias
/// are reset with the patch.
pub fn refresh_patches(current: &Pyramid, features: &mut [TrackedFeature], period: usize) {
    for f in features.iter_mut().filter(|f| f.is_tracked()) {
        f.frames_since_refresh += 1;
        if f.frames_since_refresh >= period {
            f.patches = sample_reference(current, &f.current_px, f.patch_size);
            f.reference_px = f.current_px;
            f.alpha = 1.0;
            f.beta = 0.0;
            f.frames_since_refresh = 0;
        }
    }
}
