//! Shi-Tomasi detection on a rendered frame, then pyramidal gain/bias
//! Lucas-Kanade tracking with SSIM gating through the following frames.
//!
//! ```text
//! cargo run --release --example detect_and_track [frames=20]
//! ```

use deftrack::image::{detect_shi_tomasi, DetectorParams, Pyramid};
use deftrack::sim::{SceneConfig, SceneTruth};
use deftrack::tracker::{gate_outliers, refresh_patches, track_features, TrackStatus, TrackedFeature, TrackerParams};

fn main() -> deftrack::Result<()> {
    let frames: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("frame count"));
    // slow lateral motion so inter-frame shifts stay within the pyramid's reach
    let mut scene = SceneConfig::default();
    scene.trajectory.keyframes[1].frame = 15.0;
    scene.frames = frames.max(2);
    let truth = SceneTruth::generate(&scene)?;
    let params = TrackerParams::default();

    let first = truth.render_frame(0);
    let pyr = Pyramid::build(&first.image, 4)?;
    let kps = detect_shi_tomasi(&pyr, &DetectorParams::default());
    println!("frame 0: {} keypoints on a 10×10 grid", kps.len());
    let mut feats: Vec<TrackedFeature> =
        kps.iter().enumerate().map(|(i, k)| TrackedFeature::new(i, &pyr, k.position, params.patch_size)).collect();

    for f in 1..scene.frames {
        let r = truth.render_frame(f);
        let pyr = Pyramid::build(&r.image, 4)?;
        track_features(&pyr, &mut feats, &params);
        gate_outliers(&pyr, &mut feats, params.ssim_threshold);
        refresh_patches(&pyr, &mut feats, params.refresh_period);
        let count = |s: TrackStatus| feats.iter().filter(|x| x.status == s).count();
        let tracked: Vec<&TrackedFeature> = feats.iter().filter(|x| x.is_tracked()).collect();
        let mean_ssim = tracked.iter().map(|x| x.ssim).sum::<f64>() / tracked.len().max(1) as f64;
        println!(
            "frame {f:3}: {:3} tracked, {:3} lost, {:3} rejected by SSIM | mean SSIM {mean_ssim:.3} | frame gain {:.2}, bias {:+.1}",
            count(TrackStatus::Tracked),
            count(TrackStatus::Lost),
            count(TrackStatus::Rejected),
            r.gain,
            r.bias
        );
    }
    Ok(())
}
