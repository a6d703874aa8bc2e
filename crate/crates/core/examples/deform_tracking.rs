//! Per-frame joint pose + deformation estimation on a deforming tube,
//! starting from a map with known depths so the tracker runs in scene units.
//!
//! ```text
//! cargo run --release --example deform_tracking [amplitude=5] [omega=2.5]
//! ```

use deftrack::deform::{DeformTracker, TrackingParams};
use deftrack::map::{Map, MapPoint};
use deftrack::sim::{emit_observations, SceneConfig, SceneTruth};

fn main() -> deftrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut scene = SceneConfig::default();
    scene.deformation.amplitude = args.next().map_or(5.0, |s| s.parse().expect("amplitude"));
    scene.deformation.omega = args.next().map_or(2.5, |s| s.parse().expect("omega"));
    let truth = SceneTruth::generate(&scene)?;
    let obs = emit_observations(&truth);

    let map = Map::new(obs[0].iter().map(|o| MapPoint::new(o.id, truth.tracked_in_reference(o.id, 0, 0), o.px)).collect());
    let params = TrackingParams { graph_sigma: 55.0, ..TrackingParams::default() };
    let mut tracker = DeformTracker::new(truth.camera(), params, map, 0)?;

    println!("{:>5} {:>8} {:>10} {:>12} {:>12} {:>6}", "frame", "points", "iters", "median |d|", "point err", "pose");
    for (f, o) in obs.iter().enumerate().skip(1) {
        let state = tracker.track_frame(f, o)?;
        let pts: Vec<_> = tracker.map.active().map(|p| (p.position(), truth.tracked_in_reference(p.id, f, 0))).collect();
        let err = (pts.iter().map(|(e, t)| (e - t).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt();
        let (dt, _) = state.pose.distance(&truth.relative_pose(f, 0));
        if f % 10 == 0 || f == 1 {
            println!(
                "{f:>5} {:>8} {:>10} {:>12.4} {:>12.4} {dt:>6.3}",
                state.observations.len(),
                state.summary.as_ref().map_or(0, |s| s.iterations),
                state.median_delta_norm(),
                err
            );
        }
    }
    Ok(())
}
