//! Residual blocks of the joint pose + deformation cost.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::{skew, CameraModel};
use crate::nlls::{CostFunction, ParamValue};

fn vec3(p: &ParamValue) -> Vector3<f64> {
    let v = p.as_vector();
    Vector3::new(v[0], v[1], v[2])
}

/// `π(T · (X^{t-1} + δ)) − u` over `[pose]` or `[pose, δ]`.
///
/// With a single parameter the point is taken as rigid (`δ = 0`).
pub struct ReprojectionCost {
    pub camera: CameraModel,
    pub point: Vector3<f64>,
    pub observed: Vector2<f64>,
}

impl CostFunction for ReprojectionCost {
    fn residual_dim(&self) -> usize {
        2
    }

    fn evaluate(&self, params: &[&ParamValue], residual: &mut DVector<f64>, jacobians: Option<&mut [DMatrix<f64>]>) -> bool {
        let pose = params[0].as_pose();
        let x = match params.get(1) {
            Some(d) => self.point + vec3(d),
            None => self.point,
        };
        let pc = pose.transform(&x);
        let Ok((uv, jp)) = self.camera.project_with_jacobian(&pc) else { return false };
        let r = uv - self.observed;
        residual[0] = r.x;
        residual[1] = r.y;
        if let Some(j) = jacobians {
            // d(pc)/dξ = [I | −[pc]×] for a left-multiplied twist
            let jt: Matrix2x3<f64> = jp;
            let jr: Matrix2x3<f64> = -jp * skew(&pc);
            for r in 0..2 {
                for c in 0..3 {
                    j[0][(r, c)] = jt[(r, c)];
                    j[0][(r, c + 3)] = jr[(r, c)];
                }
            }
            if j.len() > 1 {
                let jd: Matrix2x3<f64> = jp * pose.rotation_matrix();
                for r in 0..2 {
                    for c in 0..3 {
                        j[1][(r, c)] = jd[(r, c)];
                    }
                }
            }
        }
        true
    }
}

/// `w (δ_i − δ_j)` over `[δ_i, δ_j]`.
pub struct SpatialCost {
    pub weight: f64,
}

impl CostFunction for SpatialCost {
    fn residual_dim(&self) -> usize {
        3
    }

    fn evaluate(&self, params: &[&ParamValue], residual: &mut DVector<f64>, jacobians: Option<&mut [DMatrix<f64>]>) -> bool {
        let r = self.weight * (vec3(params[0]) - vec3(params[1]));
        residual.copy_from_slice(r.as_slice());
        if let Some(j) = jacobians {
            j[0].copy_from(&(Matrix3::identity() * self.weight));
            j[1].copy_from(&(Matrix3::identity() * -self.weight));
        }
        true
    }
}

/// `δ_i`: penalizes deformation that a camera motion could explain.
pub struct TemporalCost;

impl CostFunction for TemporalCost {
    fn residual_dim(&self) -> usize {
        3
    }

    fn evaluate(&self, params: &[&ParamValue], residual: &mut DVector<f64>, jacobians: Option<&mut [DMatrix<f64>]>) -> bool {
        residual.copy_from(params[0].as_vector());
        if let Some(j) = jacobians {
            j[0].copy_from(&Matrix3::identity());
        }
        true
    }
}
