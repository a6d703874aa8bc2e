use std::path::Path;

use nalgebra::{Matrix2, Matrix2x3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit bearing vector in camera coordinates.
pub type Ray = Unit<Vector3<f64>>;

const UNDISTORT_MAX_ITERS: usize = 10;
const UNDISTORT_TOL: f64 = 1e-8;

/// Lens distortion model.
///
/// `Pinhole` uses the radial-tangential (Brown-Conrady) polynomial with
/// coefficients `[k1, k2, p1, p2, k3]`. `Fisheye` uses the equidistant model
/// `θ_d = θ (1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Lens {
    Pinhole { dist: [f64; 5] },
    Fisheye { dist: [f64; 4] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub lens: Lens,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(Lens::Pinhole { dist: [0.0; 5] }, fx, fy, cx, cy, width, height)
    }

    pub fn new(lens: Lens, fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { lens, fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn is_fisheye(&self) -> bool {
        matches!(self.lens, Lens::Fisheye { .. })
    }

    /// Mean focal length in pixels; converts angular tolerances to pixels.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn in_bounds(&self, px: &Vector2<f64>, margin: f64) -> bool {
        px.x >= margin
            && px.y >= margin
            && px.x <= self.width as f64 - 1.0 - margin
            && px.y <= self.height as f64 - 1.0 - margin
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project_with_jacobian(p).map(|(u, _)| u)
    }

    /// Pixel and its Jacobian with respect to the camera-frame point.
    pub fn project_with_jacobian(&self, p: &Vector3<f64>) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
        match self.lens {
            Lens::Pinhole { dist } => {
                if p.z <= 0.0 {
                    return Err(Error::BehindCamera { depth: p.z });
                }
                let inv_z = 1.0 / p.z;
                let n = Vector2::new(p.x * inv_z, p.y * inv_z);
                let (d, jd) = radtan_distort(&dist, &n);
                let jn = Matrix2x3::new(inv_z, 0.0, -p.x * inv_z * inv_z, 0.0, inv_z, -p.y * inv_z * inv_z);
                let f = Matrix2::new(self.fx, 0.0, 0.0, self.fy);
                Ok((Vector2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy), f * jd * jn))
            }
            Lens::Fisheye { dist } => {
                let rho2 = p.x * p.x + p.y * p.y;
                if rho2 + p.z * p.z <= 0.0 {
                    return Err(Error::BehindCamera { depth: p.z });
                }
                let rho = rho2.sqrt();
                if rho < 1e-9 * p.z.abs().max(1e-300) {
                    if p.z <= 0.0 {
                        return Err(Error::BehindCamera { depth: p.z });
                    }
                    // On-axis: the model reduces to a pinhole with unit scale.
                    let inv_z = 1.0 / p.z;
                    let j = Matrix2x3::new(
                        self.fx * inv_z, 0.0, -self.fx * p.x * inv_z * inv_z,
                        0.0, self.fy * inv_z, -self.fy * p.y * inv_z * inv_z,
                    );
                    return Ok((Vector2::new(self.fx * p.x * inv_z + self.cx, self.fy * p.y * inv_z + self.cy), j));
                }
                let theta = rho.atan2(p.z);
                let (td, dtd) = equidistant(&dist, theta);
                let r2 = rho2 + p.z * p.z;
                // ∂θ/∂(x, y, z)
                let dth = Vector3::new(p.z * p.x / (rho * r2), p.z * p.y / (rho * r2), -rho / r2);
                let s = td / rho;
                // ∂s/∂(x, y, z) = (θd' ∂θ ρ − θd ∂ρ) / ρ²
                let drho = Vector3::new(p.x / rho, p.y / rho, 0.0);
                let ds = (dth * (dtd * rho) - drho * td) / rho2;
                let mx = Vector3::new(s, 0.0, 0.0) + ds * p.x;
                let my = Vector3::new(0.0, s, 0.0) + ds * p.y;
                let j = Matrix2x3::new(
                    self.fx * mx.x, self.fx * mx.y, self.fx * mx.z,
                    self.fy * my.x, self.fy * my.y, self.fy * my.z,
                );
                Ok((Vector2::new(self.fx * s * p.x + self.cx, self.fy * s * p.y + self.cy), j))
            }
        }
    }

    /// Back-projects a pixel into a unit ray.
    pub fn unproject(&self, px: &Vector2<f64>) -> Ray {
        let d = Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy);
        match self.lens {
            Lens::Pinhole { dist } => {
                let n = radtan_undistort(&dist, &d);
                Unit::new_normalize(Vector3::new(n.x, n.y, 1.0))
            }
            Lens::Fisheye { dist } => {
                let td = d.norm();
                if td < 1e-15 {
                    return Vector3::z_axis();
                }
                let theta = equidistant_inverse(&dist, td);
                let s = theta.sin() / td;
                Unit::new_normalize(Vector3::new(d.x * s, d.y * s, theta.cos()))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
        crate::io::calibration::parse(&text, path)
    }
}

/// Distorted normalized coordinates and the 2×2 Jacobian w.r.t. the undistorted ones.
fn radtan_distort(k: &[f64; 5], n: &Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let [k1, k2, p1, p2, k3] = *k;
    let (x, y) = (n.x, n.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    let dradial = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2); // ∂radial/∂r²
    let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    let dxdx = radial + x * dradial * 2.0 * x + 2.0 * p1 * y + 6.0 * p2 * x;
    let dxdy = x * dradial * 2.0 * y + 2.0 * p1 * x + 2.0 * p2 * y;
    let dydx = y * dradial * 2.0 * x + 2.0 * p1 * x + 2.0 * p2 * y;
    let dydy = radial + y * dradial * 2.0 * y + 6.0 * p1 * y + 2.0 * p2 * x;
    (Vector2::new(xd, yd), Matrix2::new(dxdx, dxdy, dydx, dydy))
}

fn radtan_undistort(k: &[f64; 5], d: &Vector2<f64>) -> Vector2<f64> {
    if k.iter().all(|c| *c == 0.0) {
        return *d;
    }
    let mut n = *d;
    for _ in 0..UNDISTORT_MAX_ITERS {
        let (f, j) = radtan_distort(k, &n);
        let Some(step) = j.lu().solve(&(f - d)) else { break };
        n -= step;
        if step.norm() < UNDISTORT_TOL * 1e-3 {
            break;
        }
    }
    n
}

fn equidistant(k: &[f64; 4], theta: f64) -> (f64, f64) {
    let t2 = theta * theta;
    let poly = 1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3])));
    let dpoly = 1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])));
    (theta * poly, dpoly)
}

fn equidistant_inverse(k: &[f64; 4], td: f64) -> f64 {
    let mut theta = td;
    for _ in 0..UNDISTORT_MAX_ITERS {
        let (f, df) = equidistant(k, theta);
        if df.abs() < 1e-12 {
            break;
        }
        let step = (f - td) / df;
        theta -= step;
        if step.abs() < UNDISTORT_TOL * 1e-3 {
            break;
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pinhole() -> CameraModel {
        CameraModel::pinhole(400.0, 400.0, 320.0, 320.0, 640, 640).unwrap()
    }

    fn distorted() -> CameraModel {
        CameraModel::new(
            Lens::Pinhole { dist: [-0.28, 0.07, 0.0008, -0.0005, 0.0] },
            458.0, 457.0, 367.0, 248.0, 752, 480,
        )
        .unwrap()
    }

    fn fisheye() -> CameraModel {
        CameraModel::new(
            Lens::Fisheye { dist: [-0.013, 0.0009, -0.0012, 0.0002] },
            380.0, 380.0, 512.0, 512.0, 1024, 1024,
        )
        .unwrap()
    }

    fn fd_jacobian(cam: &CameraModel, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let h = 1e-6;
        let mut j = Matrix2x3::zeros();
        for c in 0..3 {
            let mut a = *p;
            let mut b = *p;
            a[c] += h;
            b[c] -= h;
            let d = (cam.project(&a).unwrap() - cam.project(&b).unwrap()) / (2.0 * h);
            j.set_column(c, &d);
        }
        j
    }

    #[test]
    fn principal_point_projection() {
        let u = pinhole().project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(u, Vector2::new(320.0, 320.0));
        let u = pinhole().project(&Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - Vector2::new(360.0, 320.0)).norm() < 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(pinhole().project(&Vector3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera { .. })));
        assert!(pinhole().project(&Vector3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn unproject_pinhole_trivial() {
        let r = pinhole().unproject(&Vector2::new(320.0, 320.0));
        assert!((r.into_inner() - Vector3::z()).norm() < 1e-15);
        let r = pinhole().unproject(&Vector2::new(360.0, 320.0));
        assert!((r.into_inner() - Vector3::new(0.1, 0.0, 1.0).normalize()).norm() < 1e-15);
    }

    #[test]
    fn fisheye_sixty_degrees_matches_root_find() {
        let cam = fisheye();
        let theta = 60f64.to_radians();
        let p = Vector3::new(theta.sin() * 0.6, theta.sin() * 0.8, theta.cos());
        let u = cam.project(&p).unwrap();
        // Oracle: radial pixel distance must equal fx · θd(θ); recover θ from it by bisection.
        let r = ((u.x - cam.cx) / cam.fx).hypot((u.y - cam.cy) / cam.fy);
        let k = match cam.lens { Lens::Fisheye { dist } => dist, _ => unreachable!() };
        let f = |t: f64| t * (1.0 + k[0] * t.powi(2) + k[1] * t.powi(4) + k[2] * t.powi(6) + k[3] * t.powi(8)) - r;
        let (mut lo, mut hi) = (0.0, 1.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 { hi = mid } else { lo = mid }
        }
        assert!((0.5 * (lo + hi) - theta).abs() < 1e-10);
        // direction of the offset follows the point's azimuth
        let dir = Vector2::new(u.x - cam.cx, u.y - cam.cy).normalize();
        assert!((dir - Vector2::new(0.6, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn distorted_pixel_round_trip() {
        let cam = distorted();
        for &(x, y) in &[(10.0, 10.0), (700.0, 30.0), (367.0, 248.0), (5.0, 470.0), (740.0, 470.0)] {
            let px = Vector2::new(x, y);
            let back = cam.project(&cam.unproject(&px).into_inner()).unwrap();
            assert!((back - px).norm() < 1e-6, "{px:?} -> {back:?}");
        }
    }

    #[test]
    fn analytic_projection_jacobians() {
        for cam in [pinhole(), distorted(), fisheye()] {
            for p in [Vector3::new(0.3, -0.2, 1.5), Vector3::new(-1.0, 0.4, 0.8), Vector3::new(0.01, 0.02, 2.0)] {
                let (_, j) = cam.project_with_jacobian(&p).unwrap();
                let n = fd_jacobian(&cam, &p);
                assert!((j - n).norm() / n.norm() < 1e-6, "{j} vs {n}");
            }
        }
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraModel::pinhole(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraModel::pinhole(1.0, 1.0, 10.0, 1.0, 4, 4).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_every_model(x in 0.0f64..1.0, y in 0.0f64..1.0, which in 0usize..3) {
            let cam = [pinhole(), distorted(), fisheye()][which];
            let px = Vector2::new(x * (cam.width - 1) as f64, y * (cam.height - 1) as f64);
            let ray = cam.unproject(&px);
            prop_assert!((ray.norm() - 1.0).abs() < 1e-12);
            let back = cam.project(&ray.into_inner()).unwrap();
            prop_assert!((back - px).norm() < 1e-6);
        }
    }
}
