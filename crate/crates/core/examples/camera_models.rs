//! Pinhole and equidistant-fisheye projection, unprojection and the
//! calibration file format.
//!
//! ```text
//! cargo run --example camera_models [calibration.txt]
//! ```

use deftrack::geometry::{CameraModel, Lens, Pose, Twist};
use deftrack::io::calibration;
use nalgebra::{Vector2, Vector3};

fn main() -> deftrack::Result<()> {
    let pinhole = match std::env::args().nth(1) {
        Some(p) => CameraModel::load(p.as_ref())?,
        None => CameraModel::new(Lens::Pinhole { dist: [-0.28, 0.07, 1e-4, -2e-4, 0.0] }, 400.0, 400.0, 320.0, 240.0, 640, 480)?,
    };
    let fisheye = CameraModel::new(Lens::Fisheye { dist: [-0.01, 0.003, -0.001, 0.0002] }, 300.0, 300.0, 320.0, 240.0, 640, 480)?;

    for (name, cam) in [("pinhole", &pinhole), ("fisheye", &fisheye)] {
        println!("{name}:\n{}", calibration::to_string(cam));
        let mut worst: f64 = 0.0;
        for y in (0..cam.height).step_by(40) {
            for x in (0..cam.width).step_by(40) {
                let px = Vector2::new(x as f64, y as f64);
                let back = cam.project(&cam.unproject(&px))?;
                worst = worst.max((back - px).norm());
            }
        }
        println!("  worst project(unproject(p)) error over a 40 px grid: {worst:.2e} px");
        let p = Vector3::new(0.3, -0.2, 1.0);
        let (uv, jac) = cam.project_with_jacobian(&p)?;
        println!("  project({:?}) = ({:.3}, {:.3}); d(u,v)/dX row 0 = {:.3?}", p.as_slice(), uv.x, uv.y, jac.row(0).iter().collect::<Vec<_>>());
    }

    // a 60° off-axis point is still in front of the fisheye, far outside any pinhole
    let th = 60f64.to_radians();
    let off_axis = Vector3::new(th.sin(), 0.0, th.cos());
    println!("fisheye pixel of a 60° off-axis ray: {:.2?}", fisheye.project(&off_axis)?.as_slice());

    // poses are updated by left-multiplied twists
    let t = Pose::identity().retract(&Twist::new(0.1, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2));
    println!("exp(twist) moves the origin to {:.3?}", t.transform(&Vector3::zeros()).as_slice());
    Ok(())
}
