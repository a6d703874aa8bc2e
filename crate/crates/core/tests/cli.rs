use std::path::Path;
use std::process::{Command, Output};

fn deftrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deftrack")).args(args).arg("-o").arg(out).output().expect("spawn deftrack")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn sim_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, track, eval) = (dir.path().join("sim"), dir.path().join("track"), dir.path().join("eval"));

    let o = deftrack(&["sim", "--frames", "30", "--no-render", "--seed", "4"], &sim);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["calibration.txt", "scene.toml", "truth_poses.csv", "truth_points.csv", "observations.csv", "manifest.json"] {
        assert!(sim.join(f).is_file(), "missing {f}");
    }

    let calib = sim.join("calibration.txt");
    let obs = sim.join("observations.csv");
    let poses = sim.join("truth_poses.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_deftrack"))
        .args(["track", "--observations"])
        .arg(&obs)
        .arg("--calib")
        .arg(&calib)
        .arg("--truth-poses")
        .arg(&poses)
        .arg("-o")
        .arg(&track)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["poses.csv", "relative_pose.csv", "initial_map.ply", "trajectories.csv"] {
        assert!(track.join(f).is_file(), "missing {f}");
    }

    let o = Command::new(env!("CARGO_BIN_EXE_deftrack"))
        .args(["eval", "--truth"])
        .arg(&sim)
        .arg("--run")
        .arg(&track)
        .arg("-o")
        .arg(&eval)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(eval.join("eval.csv")).unwrap();
    assert!(rows.lines().count() > 20);
    assert!(String::from_utf8_lossy(&o.stdout).contains("RMSE"));
}

#[test]
fn missing_input_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let calib = dir.path().join("cal.txt");
    std::fs::write(&calib, "fx = 250\nfy = 250\ncx = 319.5\ncy = 239.5\nwidth = 640\nheight = 480\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_deftrack"))
        .args(["track", "--images"])
        .arg(dir.path().join("nowhere"))
        .arg("--calib")
        .arg(&calib)
        .arg("-o")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[run]\nseed = 1\nturbo = true\n").unwrap();
    let o = deftrack(&["sim", "--no-render", "-c", unknown.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "[run]\nworkers = 0\n").unwrap();
    let o = deftrack(&["sim", "--no-render", "-c", invalid.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(code(&o), 2);

    let o = deftrack(&["sim", "--no-render", "--log", "loud"], &dir.path().join("c"));
    assert_eq!(code(&o), 2);
}

#[test]
fn too_few_correspondences_is_an_initialization_failure() {
    let dir = tempfile::tempdir().unwrap();
    let calib = dir.path().join("cal.txt");
    std::fs::write(&calib, "fx = 250\nfy = 250\ncx = 319.5\ncy = 239.5\nwidth = 640\nheight = 480\n").unwrap();
    let obs = dir.path().join("obs.csv");
    let mut text = String::from("frame,id,u,v\n");
    for f in 0..10 {
        for id in 0..5 {
            text += &format!("{f},{id},{},{}\n", 100.0 + 40.0 * id as f64 + f as f64, 200.0 + 10.0 * id as f64);
        }
    }
    std::fs::write(&obs, text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_deftrack"))
        .args(["track", "--observations"])
        .arg(&obs)
        .arg("--calib")
        .arg(&calib)
        .arg("-o")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
