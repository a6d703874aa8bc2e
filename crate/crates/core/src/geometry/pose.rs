use nalgebra::{Matrix3, Point3, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// 6-vector twist `(ρ, ω)`: translational part first, rotation (axis-angle) last.
pub type Twist = Vector6<f64>;

/// Rigid-body transform. Used both as world→camera (`T_cw`) and as a relative
/// camera motion. The world frame is the camera frame of the first image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_rotation_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_matrix_eps(r, 1e-12, 100, Rotation3::identity());
        Self { rotation: UnitQuaternion::from_rotation_matrix(&rot), translation }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.transform(&p.coords))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.into_inner() * other.rotation.into_inner();
        Pose {
            rotation: UnitQuaternion::new_normalize(q),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose { rotation: inv, translation: -(inv * self.translation) }
    }

    /// Camera centre in the frame this pose maps *from* (for `T_cw`, the world).
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Left-multiplicative update `exp(ξ) · self`.
    pub fn retract(&self, twist: &Twist) -> Pose {
        se3_exp(twist).compose(self)
    }

    /// Rotation angle (rad) and translation distance between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let d = self.compose(&other.inverse());
        (d.rotation.angle(), (self.translation - other.translation).norm())
    }

    /// `(tx, ty, tz, qx, qy, qz, qw)`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        let t = self.translation;
        [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
    }

    pub fn from_array(a: [f64; 7]) -> Pose {
        let q = Quaternion::new(a[6], a[3], a[4], a[5]);
        Pose::new(UnitQuaternion::new_normalize(q), Vector3::new(a[0], a[1], a[2]))
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// `V(ω)` of the SE(3) exponential, mapping `ρ` to the translation.
fn left_jacobian_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    let w2 = w * w;
    if theta2 < 1e-12 {
        Matrix3::identity() + 0.5 * w + w2 / 6.0
    } else {
        let theta = theta2.sqrt();
        Matrix3::identity()
            + (1.0 - theta.cos()) / theta2 * w
            + (theta - theta.sin()) / (theta2 * theta) * w2
    }
}

fn left_jacobian_so3_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let w = skew(omega);
    let w2 = w * w;
    if theta2 < 1e-12 {
        Matrix3::identity() - 0.5 * w + w2 / 12.0
    } else {
        let theta = theta2.sqrt();
        let half = 0.5 * theta;
        let coef = (1.0 - half * half.cos() / half.sin()) / theta2;
        Matrix3::identity() - 0.5 * w + coef * w2
    }
}

pub fn se3_exp(twist: &Twist) -> Pose {
    let rho = Vector3::new(twist[0], twist[1], twist[2]);
    let omega = Vector3::new(twist[3], twist[4], twist[5]);
    let rotation = UnitQuaternion::from_scaled_axis(omega);
    Pose { rotation, translation: left_jacobian_so3(&omega) * rho }
}

pub fn se3_log(pose: &Pose) -> Twist {
    let omega = pose.rotation.scaled_axis();
    let rho = left_jacobian_so3_inv(&omega) * pose.translation;
    Twist::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_twist_is_identity() {
        let p = se3_exp(&Twist::zeros());
        assert_eq!(p.rotation.angle(), 0.0);
        assert_eq!(p.translation, Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = se3_exp(&Twist::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2));
        let x = p.transform(&Vector3::x());
        assert!((x - Vector3::y()).norm() < 1e-12);
        assert!((p.rotation.angle() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn composition_with_inverse_is_identity() {
        let t = se3_exp(&Twist::new(0.3, -1.2, 2.0, 0.4, -0.7, 0.2));
        let id = t.inverse().compose(&t);
        assert!(id.rotation.angle() < 1e-10);
        assert!(id.translation.norm() < 1e-10);
        let back = t.inverse().inverse();
        assert!(back.distance(&t).0 < 1e-10 && back.distance(&t).1 < 1e-10);
    }

    #[test]
    fn stays_orthonormal_after_many_increments() {
        let step = se3_exp(&Twist::new(0.01, 0.0, 0.002, 0.013, -0.007, 0.021));
        let mut acc = Pose::identity();
        for _ in 0..10_000 {
            acc = step.compose(&acc);
        }
        let r = acc.rotation_matrix();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-10);
        assert!((r.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn array_round_trip() {
        let t = se3_exp(&Twist::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3));
        let back = Pose::from_array(t.to_array());
        assert!(back.distance(&t).0 < 1e-12 && back.distance(&t).1 < 1e-12);
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(
            rho in prop::array::uniform3(-5.0f64..5.0),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..3.1,
        ) {
            let a = Vector3::from(axis);
            prop_assume!(a.norm() > 1e-3);
            let omega = a.normalize() * angle;
            let xi = Twist::new(rho[0], rho[1], rho[2], omega.x, omega.y, omega.z);
            let back = se3_log(&se3_exp(&xi));
            prop_assert!((back - xi).norm() < 1e-9);
        }

        #[test]
        fn composition_is_associative(
            a in prop::array::uniform6(-1.0f64..1.0),
            b in prop::array::uniform6(-1.0f64..1.0),
            c in prop::array::uniform6(-1.0f64..1.0),
        ) {
            let (a, b, c) = (se3_exp(&Twist::from(a)), se3_exp(&Twist::from(b)), se3_exp(&Twist::from(c)));
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            let (dr, dt) = l.distance(&r);
            prop_assert!(dr < 1e-10 && dt < 1e-10);
        }
    }
}
