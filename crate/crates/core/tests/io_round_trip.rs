use std::path::Path;

use deftrack::geometry::{CameraModel, Lens, Pose};
use deftrack::io::{self, calibration, PointRow};
use nalgebra::{UnitQuaternion, Vector3};

#[test]
fn calibration_survives_a_round_trip() {
    let cams = [
        CameraModel::new(Lens::Pinhole { dist: [-0.21, 0.043, 1.5e-4, -2e-4, 0.0071] }, 412.3, 410.9, 319.25, 241.1, 640, 480).unwrap(),
        CameraModel::new(Lens::Fisheye { dist: [-0.013, 0.0021, -3e-4, 1e-5] }, 380.0, 381.5, 512.0, 510.0, 1024, 1024).unwrap(),
    ];
    for cam in cams {
        let back = calibration::parse(&calibration::to_string(&cam), Path::new("cal.txt")).unwrap();
        assert_eq!(back, cam);
    }
}

#[test]
fn calibration_errors_name_the_line() {
    let err = calibration::parse("fx = 250\nfy = abc\n", Path::new("cal.txt")).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

#[test]
fn tables_survive_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let poses: Vec<(usize, Pose)> = (0..5)
        .map(|f| {
            let rot = UnitQuaternion::from_euler_angles(0.01 * f as f64, -0.02, 0.3);
            (f, Pose::new(rot, Vector3::new(f as f64, 0.5, -2.0)))
        })
        .collect();
    let p = dir.path().join("poses.csv");
    io::write_poses(&p, &poses).unwrap();
    let back = io::read_poses(&p).unwrap();
    assert_eq!(back.len(), poses.len());
    for ((fa, a), (fb, b)) in back.iter().zip(&poses) {
        assert_eq!(fa, fb);
        assert!((a.translation - b.translation).norm() < 1e-12);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
    }

    let rows = vec![PointRow::new(7, 0, &Vector3::new(1.0, 2.0, 3.0)), PointRow::new(7, 1, &Vector3::new(1.5, 2.0, 3.0))];
    let q = dir.path().join("points.csv");
    io::write_points(&q, &rows).unwrap();
    let table = io::read_points(&q).unwrap();
    assert_eq!(table[&1][&7], Vector3::new(1.5, 2.0, 3.0));

    let cloud = vec![(Some(3), Vector3::new(0.25, -1.0, 4.0)), (Some(9), Vector3::new(1.0, 1.0, 1.0))];
    let ply = dir.path().join("cloud.ply");
    io::write_ply(&ply, &cloud).unwrap();
    assert_eq!(io::read_ply(&ply).unwrap(), cloud);
}
