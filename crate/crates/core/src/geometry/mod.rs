//! Camera models, rigid poses and ray helpers.

mod camera;
mod pose;

pub use camera::{CameraModel, Lens, Ray};
pub use pose::{se3_exp, se3_log, skew, Pose, Twist};

use nalgebra::Vector3;

/// Angle between two directions, in radians.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
