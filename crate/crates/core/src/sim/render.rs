//! Z-buffered triangle rasterization of the deformed surface.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::SceneConfig;
use super::mesh::SurfaceMesh;
use super::{deform_vertices, texture};
use crate::geometry::Pose;
use crate::image::ImageBuffer;

pub const BACKGROUND: f64 = 10.0;
const NEAR: f64 = 0.05;

/// A rendered frame with per-pixel depth and the rest coordinate of the
/// visible surface point (`None` where the ray misses).
#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: ImageBuffer,
    pub depth: Vec<f64>,
    pub surface: Vec<Option<Vector3<f64>>>,
    pub gain: f64,
    pub bias: f64,
}

impl Rendered {
    pub fn surface_at(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        self.surface[y * self.image.width + x]
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Rasterizes the mesh deformed to `positions` as seen from `pose`.
/// Returns clean intensities (no photometric perturbation).
pub fn rasterize(scene: &SceneConfig, mesh: &SurfaceMesh, positions: &[Vector3<f64>], pose: &Pose) -> (ImageBuffer, Vec<f64>, Vec<Option<Vector3<f64>>>) {
    let c = &scene.camera;
    let (w, h) = (c.width, c.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut hit: Vec<Option<(usize, [f64; 3])>> = vec![None; w * h];
    let cam: Vec<Vector3<f64>> = positions.iter().map(|p| pose.transform(p)).collect();
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let p = [cam[tri[0]], cam[tri[1]], cam[tri[2]]];
        if p.iter().any(|q| q.z < NEAR) {
            continue;
        }
        let s: Vec<Vector2<f64>> = p.iter().map(|q| Vector2::new(c.fx * q.x / q.z + c.cx, c.fy * q.y / q.z + c.cy)).collect();
        let d = [p[0].z, p[1].z, p[2].z];
        let area = edge(&s[0], &s[1], &s[2]);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = s.iter().map(|v| v.x).fold(f64::INFINITY, f64::min).floor().max(0.0);
        let xmax = s.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max).ceil().min((w - 1) as f64);
        let ymin = s.iter().map(|v| v.y).fold(f64::INFINITY, f64::min).floor().max(0.0);
        let ymax = s.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max).ceil().min((h - 1) as f64);
        if xmin > xmax || ymin > ymax {
            continue;
        }
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let q = Vector2::new(x as f64, y as f64);
                let b = [edge(&s[1], &s[2], &q) / area, edge(&s[2], &s[0], &q) / area, edge(&s[0], &s[1], &q) / area];
                if b.iter().any(|v| *v < -1e-9) {
                    continue;
                }
                // perspective-correct interpolation
                let iz = b[0] / d[0] + b[1] / d[1] + b[2] / d[2];
                let z = 1.0 / iz;
                let k = y * w + x;
                if z < zbuf[k] {
                    zbuf[k] = z;
                    hit[k] = Some((ti, [b[0] / d[0] / iz, b[1] / d[1] / iz, b[2] / d[2] / iz]));
                }
            }
        }
    }
    let mut img = ImageBuffer::filled(w, h, BACKGROUND);
    let mut surface = vec![None; w * h];
    for k in 0..w * h {
        if let Some((ti, wt)) = hit[k] {
            let t = mesh.triangles[ti];
            let rest = mesh.rest[t[0]] * wt[0] + mesh.rest[t[1]] * wt[1] + mesh.rest[t[2]] * wt[2];
            img.data[k] = texture::intensity(&scene.texture, &rest, zbuf[k] / c.fx.min(c.fy));
            surface[k] = Some(rest);
        }
    }
    (img, zbuf, surface)
}

fn frame_rng(seed: u64, frame: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03u64.wrapping_mul(frame as u64 + 1));
    rng.set_stream(stream);
    rng
}

/// Per-frame global gain and bias, reproducible per frame.
pub fn photometric(scene: &SceneConfig, frame: usize) -> (f64, f64) {
    let mut rng = frame_rng(scene.seed, frame, 1);
    let [g0, g1] = scene.photometric.gain_range;
    let [b0, b1] = scene.photometric.bias_range;
    let g = if g1 > g0 { rng.random_range(g0..=g1) } else { g0 };
    let b = if b1 > b0 { rng.random_range(b0..=b1) } else { b0 };
    (g, b)
}

/// Renders frame `frame`: clean rasterization, then `I' = g·I + b`, then
/// additive Gaussian noise.
pub fn render(scene: &SceneConfig, mesh: &SurfaceMesh, frame: usize) -> Rendered {
    let d = &scene.deformation;
    let positions = deform_vertices(&mesh.rest, d.amplitude, d.omega, scene.time(frame), d.phase_scale);
    let pose = scene.camera_pose(frame);
    let (mut image, depth, surface) = rasterize(scene, mesh, &positions, &pose);
    let (gain, bias) = photometric(scene, frame);
    for v in &mut image.data {
        *v = gain * *v + bias;
    }
    if scene.photometric.pixel_noise > 0.0 {
        let mut rng = frame_rng(scene.seed, frame, 2);
        let n = Normal::new(0.0, scene.photometric.pixel_noise).expect("valid noise");
        for v in &mut image.data {
            *v += n.sample(&mut rng);
        }
    }
    image.index = frame;
    image.timestamp = scene.time(frame);
    Rendered { image, depth, surface, gain, bias }
}

pub(super) fn observation_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    frame_rng(seed, frame, 3)
}
