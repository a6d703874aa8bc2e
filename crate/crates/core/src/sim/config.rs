use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    /// Open-ended cylinder around the world z axis, `z ∈ [0, length]`,
    /// optionally capped at the far end.
    Tube { radius: f64, length: f64, ring_vertices: usize, axial_vertices: usize, closed_end: bool },
    /// Floor `y = offset`, `x ∈ [−width/2, width/2]`, `z ∈ [0, length]`.
    Plane { width: f64, length: f64, offset: f64, resolution: usize },
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry::Tube { radius: 25.0, length: 200.0, ring_vertices: 96, axial_vertices: 200, closed_end: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub seed: u64,
    pub octaves: usize,
    /// Lattice frequency of the first octave, cycles per scene unit.
    pub base_frequency: f64,
    pub persistence: f64,
    pub mean: f64,
    pub contrast: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self { seed: 7, octaves: 4, base_frequency: 0.6, persistence: 0.5, mean: 120.0, contrast: 160.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformationConfig {
    /// Amplitude `A`, scene units.
    pub amplitude: f64,
    /// Angular frequency `ω`, rad/s.
    pub omega: f64,
    /// Multiplies `x⁰ + y⁰ + z⁰` inside the sine, rad per scene unit.
    pub phase_scale: f64,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        Self { amplitude: 0.0, omega: 0.0, phase_scale: 1.0 / 25.0 }
    }
}

/// Camera centre and orientation (roll, pitch, yaw about the camera's
/// z, x, y axes, degrees) at a frame. Camera axes: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: f64,
    pub position: [f64; 3],
    #[serde(default)]
    pub orientation_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Piecewise-linear keyframes; positions interpolate linearly and
    /// orientations by slerp. The sway below is added on top.
    pub keyframes: Vec<Keyframe>,
    /// Lateral sway `(a sin φ, a (1 − cos φ) / 2, 0)` with `φ = 2π f / period`;
    /// it starts on the keyframed path.
    pub sway_amplitude: f64,
    pub sway_period: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            keyframes: vec![
                // a quick lateral sweep gives the three-frame initialization
                // a usable baseline, then a slow insertion
                Keyframe { frame: 0.0, position: [-7.0, 0.0, 20.0], orientation_deg: [0.0; 3] },
                Keyframe { frame: 3.0, position: [7.0, 0.0, 20.3], orientation_deg: [0.0; 3] },
                Keyframe { frame: 99.0, position: [7.0, 0.0, 22.0], orientation_deg: [0.0; 3] },
            ],
            sway_amplitude: 2.0,
            sway_period: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotometricConfig {
    pub gain_range: [f64; 2],
    pub bias_range: [f64; 2],
    /// Additive Gaussian intensity noise on rendered frames.
    pub pixel_noise: f64,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self { gain_range: [1.0, 1.0], bias_range: [0.0, 0.0], pixel_noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCamera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for SimCamera {
    fn default() -> Self {
        Self { width: 640, height: 480, fx: 250.0, fy: 250.0, cx: 319.5, cy: 239.5 }
    }
}

/// Everything needed to regenerate a synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub geometry: Geometry,
    pub texture: TextureConfig,
    pub deformation: DeformationConfig,
    pub trajectory: TrajectoryConfig,
    pub photometric: PhotometricConfig,
    pub camera: SimCamera,
    /// Surface points followed by [`crate::sim::emit_observations`].
    pub tracked_points: usize,
    /// Observation noise, pixels.
    pub track_noise_px: f64,
    /// Border (pixels) inside which projections count as visible.
    pub visibility_margin: f64,
    /// Tracked points are drawn from surface seen closer than this in frame 0.
    pub max_track_depth: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 100,
            fps: 25.0,
            geometry: Geometry::default(),
            texture: TextureConfig::default(),
            deformation: DeformationConfig::default(),
            trajectory: TrajectoryConfig::default(),
            photometric: PhotometricConfig::default(),
            camera: SimCamera::default(),
            tracked_points: 300,
            track_noise_px: 0.3,
            visibility_margin: 8.0,
            max_track_depth: 35.0,
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::config("scene", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn camera_model(&self) -> CameraModel {
        let c = &self.camera;
        CameraModel::pinhole(c.fx, c.fy, c.cx, c.cy, c.width, c.height).expect("validated camera")
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.deformation;
        if !(d.amplitude >= 0.0) {
            return Err(Error::config("deformation.amplitude", "must be ≥ 0"));
        }
        if !(d.omega >= 0.0) {
            return Err(Error::config("deformation.omega", "must be ≥ 0"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be positive"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::config("fps", "must be positive"));
        }
        let c = &self.camera;
        CameraModel::pinhole(c.fx, c.fy, c.cx, c.cy, c.width, c.height).map_err(|e| Error::config("camera", e.to_string()))?;
        let t = &self.trajectory;
        if t.keyframes.is_empty() {
            return Err(Error::config("trajectory.keyframes", "need at least one keyframe"));
        }
        if t.keyframes.windows(2).any(|w| !(w[1].frame > w[0].frame)) {
            return Err(Error::config("trajectory.keyframes", "frames must be strictly increasing"));
        }
        if t.sway_amplitude != 0.0 && !(t.sway_period > 0.0) {
            return Err(Error::config("trajectory.sway_period", "must be positive when swaying"));
        }
        match self.geometry {
            Geometry::Tube { radius, length, ring_vertices, axial_vertices, .. } => {
                if !(radius > 0.0 && length > 0.0) || ring_vertices < 8 || axial_vertices < 2 {
                    return Err(Error::config("geometry", "tube needs positive size, ≥ 8 ring and ≥ 2 axial vertices"));
                }
                // keep the camera inside the tube, clear of the deformed wall
                let clearance = radius - d.amplitude - 1.0;
                for f in 0..self.frames {
                    let c = self.camera_center(f);
                    if c.xy().norm() >= clearance || c.z < 0.0 || c.z > length {
                        return Err(Error::config(
                            "trajectory",
                            format!("camera at frame {f} ({:.2}, {:.2}, {:.2}) leaves the tube interior", c.x, c.y, c.z),
                        ));
                    }
                }
            }
            Geometry::Plane { width, length, resolution, offset } => {
                if !(width > 0.0 && length > 0.0) || resolution < 2 {
                    return Err(Error::config("geometry", "plane needs positive size and resolution ≥ 2"));
                }
                for f in 0..self.frames {
                    let c = self.camera_center(f);
                    if (c.y - offset).abs() <= d.amplitude + 1e-9 {
                        return Err(Error::config("trajectory", format!("camera at frame {f} touches the plane")));
                    }
                }
            }
        }
        if !(self.max_track_depth > 0.0) {
            return Err(Error::config("max_track_depth", "must be positive"));
        }
        if !(self.track_noise_px >= 0.0) || !(self.photometric.pixel_noise >= 0.0) {
            return Err(Error::config("noise", "noise levels must be ≥ 0"));
        }
        Ok(())
    }

    fn keyframe_state(&self, frame: f64) -> (Vector3<f64>, UnitQuaternion<f64>) {
        let ks = &self.trajectory.keyframes;
        let orient = |k: &Keyframe| {
            let [r, p, y] = k.orientation_deg.map(f64::to_radians);
            // yaw about y, then pitch about x, then roll about z
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), y)
                * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), p)
                * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), r)
        };
        let pos = |k: &Keyframe| Vector3::from(k.position);
        if frame <= ks[0].frame || ks.len() == 1 {
            return (pos(&ks[0]), orient(&ks[0]));
        }
        for w in ks.windows(2) {
            if frame <= w[1].frame {
                let s = (frame - w[0].frame) / (w[1].frame - w[0].frame);
                return (pos(&w[0]).lerp(&pos(&w[1]), s), orient(&w[0]).slerp(&orient(&w[1]), s));
            }
        }
        let last = ks.last().unwrap();
        // hold the last velocity beyond the final keyframe
        let prev = &ks[ks.len() - 2];
        let v = (pos(last) - pos(prev)) / (last.frame - prev.frame);
        (pos(last) + v * (frame - last.frame), orient(last))
    }

    pub fn camera_center(&self, frame: usize) -> Vector3<f64> {
        let (p, _) = self.keyframe_state(frame as f64);
        p + self.sway(frame)
    }

    fn sway(&self, frame: usize) -> Vector3<f64> {
        let t = &self.trajectory;
        if t.sway_amplitude == 0.0 {
            return Vector3::zeros();
        }
        let phi = std::f64::consts::TAU * frame as f64 / t.sway_period;
        // starts at the axis and circles around it
        Vector3::new(t.sway_amplitude * phi.sin(), t.sway_amplitude * (1.0 - phi.cos()) * 0.5, 0.0)
    }

    /// World→camera pose at `frame`.
    pub fn camera_pose(&self, frame: usize) -> Pose {
        let (_, q) = self.keyframe_state(frame as f64);
        let c = self.camera_center(frame);
        // T_wc = (q, c)  ⇒  T_cw = (q⁻¹, −q⁻¹ c)
        Pose::new(q, c).inverse()
    }
}
