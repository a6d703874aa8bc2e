//! Synthetic deforming scenes: a tube (or floor plane) whose vertices follow
//! a travelling sine wave, a scripted camera, a z-buffer renderer with a
//! procedural texture, and ideal feature tracks for optimizer-only runs.
//!
//! The deformation moves only the `y` coordinate:
//! `y = y⁰ + A sin(ω t + s (x⁰ + y⁰ + z⁰))`, with `s` the phase scale (rest
//! coordinates are in scene milli-units, so an unscaled phase would wrap every
//! few units).

mod config;
mod mesh;
mod render;
mod texture;

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use config::{DeformationConfig, Geometry, Keyframe, PhotometricConfig, SceneConfig, SimCamera, TextureConfig, TrajectoryConfig};
pub use mesh::SurfaceMesh;
pub use render::{photometric, rasterize, Rendered, BACKGROUND};
pub use texture::{filtered_noise, fractal_noise, intensity, value_noise};

use crate::error::Result;
use crate::geometry::{CameraModel, Pose};
use crate::map::Observation;

pub fn deform_point(rest: &Vector3<f64>, amplitude: f64, omega: f64, t: f64, phase_scale: f64) -> Vector3<f64> {
    let mut p = *rest;
    p.y += amplitude * (omega * t + phase_scale * (rest.x + rest.y + rest.z)).sin();
    p
}

pub fn deform_vertices(rest: &[Vector3<f64>], amplitude: f64, omega: f64, t: f64, phase_scale: f64) -> Vec<Vector3<f64>> {
    rest.iter().map(|r| deform_point(r, amplitude, omega, t, phase_scale)).collect()
}

/// Ground truth of one synthetic sequence.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub config: SceneConfig,
    pub mesh: SurfaceMesh,
    /// World→camera pose per frame.
    pub poses: Vec<Pose>,
    /// Rest coordinates of the tracked surface points; the index is the id.
    pub tracked_rest: Vec<Vector3<f64>>,
}

impl SceneTruth {
    pub fn generate(config: &SceneConfig) -> Result<Self> {
        config.validate()?;
        let mesh = SurfaceMesh::build(&config.geometry);
        let poses = (0..config.frames).map(|f| config.camera_pose(f)).collect();
        let mut truth = Self { config: config.clone(), mesh, poses, tracked_rest: Vec::new() };
        truth.tracked_rest = truth.sample_tracked_points();
        Ok(truth)
    }

    pub fn camera(&self) -> CameraModel {
        self.config.camera_model()
    }

    fn sample_tracked_points(&self) -> Vec<Vector3<f64>> {
        let cfg = &self.config;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
        let cam = self.camera();
        let mut out = Vec::with_capacity(cfg.tracked_points);
        let z0 = self.poses[0].center().z;
        for _ in 0..cfg.tracked_points * 1000 {
            if out.len() == cfg.tracked_points {
                break;
            }
            let rest = match cfg.geometry {
                Geometry::Tube { radius, length, .. } => {
                    let th = rng.random_range(0.0..TAU);
                    Vector3::new(radius * th.cos(), radius * th.sin(), rng.random_range(z0.max(0.0)..length))
                }
                Geometry::Plane { width, length, offset, .. } => {
                    Vector3::new(rng.random_range(-0.5 * width..0.5 * width), offset, rng.random_range(0.0..length))
                }
            };
            let x = self.world_point(&rest, 0);
            if self.poses[0].transform(&x).z <= cfg.max_track_depth && self.project(&cam, &x, 0).is_some() {
                out.push(rest);
            }
        }
        out
    }

    /// Pixel of world point `x` in `frame` if it is in front and inside the
    /// visibility margin.
    fn project(&self, cam: &CameraModel, x: &Vector3<f64>, frame: usize) -> Option<nalgebra::Vector2<f64>> {
        let pc = self.poses[frame].transform(x);
        if pc.z < 0.5 {
            return None;
        }
        let uv = cam.project(&pc).ok()?;
        cam.in_bounds(&uv, self.config.visibility_margin).then_some(uv)
    }

    pub fn world_point(&self, rest: &Vector3<f64>, frame: usize) -> Vector3<f64> {
        let d = &self.config.deformation;
        deform_point(rest, d.amplitude, d.omega, self.config.time(frame), d.phase_scale)
    }

    pub fn vertices(&self, frame: usize) -> Vec<Vector3<f64>> {
        let d = &self.config.deformation;
        deform_vertices(&self.mesh.rest, d.amplitude, d.omega, self.config.time(frame), d.phase_scale)
    }

    /// Tracked point `id` at `frame`, expressed in the camera frame of
    /// `reference` (the estimator's world frame).
    pub fn tracked_in_reference(&self, id: usize, frame: usize, reference: usize) -> Vector3<f64> {
        self.poses[reference].transform(&self.world_point(&self.tracked_rest[id], frame))
    }

    /// Any rest point at `frame`, in the camera frame of `reference`.
    pub fn rest_in_reference(&self, rest: &Vector3<f64>, frame: usize, reference: usize) -> Vector3<f64> {
        self.poses[reference].transform(&self.world_point(rest, frame))
    }

    /// Camera pose at `frame` relative to the `reference` camera (`T_{C^f C^r}`).
    pub fn relative_pose(&self, frame: usize, reference: usize) -> Pose {
        self.poses[frame].compose(&self.poses[reference].inverse())
    }

    pub fn render_frame(&self, frame: usize) -> Rendered {
        render::render(&self.config, &self.mesh, frame)
    }

    /// Number of mesh vertices projecting inside the image at `frame`.
    pub fn visible_vertices(&self, frame: usize) -> usize {
        let cam = self.camera();
        self.vertices(frame).iter().filter(|v| self.project(&cam, v, frame).is_some()).count()
    }
}

use rand::SeedableRng;

/// Per-frame projections of the tracked points, with Gaussian pixel noise of
/// `track_noise_px`. A point missing from a frame (out of view) is omitted;
/// once it leaves the view it is not reported again, matching a tracker
/// without re-acquisition.
pub fn emit_observations(truth: &SceneTruth) -> Vec<Vec<Observation>> {
    let cfg = &truth.config;
    let cam = truth.camera();
    let noise = (cfg.track_noise_px > 0.0).then(|| Normal::new(0.0, cfg.track_noise_px).expect("valid noise"));
    let mut alive = vec![true; truth.tracked_rest.len()];
    let mut frames = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let mut rng = render::observation_rng(cfg.seed, f);
        let mut obs = Vec::new();
        for (id, rest) in truth.tracked_rest.iter().enumerate() {
            // draw noise for every point so one point leaving the view does
            // not shift the noise of the others
            let (nx, ny) = match &noise {
                Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                None => (0.0, 0.0),
            };
            if !alive[id] {
                continue;
            }
            match truth.project(&cam, &truth.world_point(rest, f), f) {
                Some(uv) => obs.push(Observation::new(id, uv + nalgebra::Vector2::new(nx, ny))),
                None => alive[id] = false,
            }
        }
        frames.push(obs);
    }
    frames
}
