//! Scale-aligned evaluation: per-frame optimal scale and RMSE, the
//! similarity-aligned trajectory error, and the three report formats.
//!
//! ```text
//! cargo run --release --example evaluate
//! ```

use deftrack::eval::{optimal_scale, rmse_frame, trend_report, TrendCell};
use deftrack::pipeline::{run_simulation, PipelineConfig};
use deftrack::sim::SceneConfig;
use nalgebra::Vector3;

fn main() -> deftrack::Result<()> {
    // a monocular map is only defined up to scale: the metric must not care
    let truth = [Vector3::new(1.0, 2.0, 30.0), Vector3::new(-4.0, 0.5, 25.0), Vector3::new(3.0, -1.0, 40.0)];
    for k in [0.1, 3.0, 42.0] {
        let est: Vec<_> = truth.iter().map(|t| (t + Vector3::new(0.1, -0.2, 0.3)) / k).collect();
        let s = optimal_scale(&est, &truth)?;
        println!("estimate / {k:<4}: s = {s:9.4}, RMSE = {:.12}", rmse_frame(&est, &truth, s)?);
    }

    let mut scene = SceneConfig::default();
    scene.deformation.amplitude = 2.5;
    scene.deformation.omega = 2.5;
    let run = run_simulation(&scene, &PipelineConfig::default())?;
    let text = run.report.to_text();
    for line in text.lines().take(6).chain(text.lines().rev().take(3).collect::<Vec<_>>().into_iter().rev()) {
        println!("{line}");
    }
    println!("CSV header: {}", run.report.to_csv().lines().next().unwrap_or(""));
    println!("long CSV rows: {}", run.report.to_long_csv().lines().count() - 1);

    // the original simulated colonoscopy sweep passes the same ordering checks
    let published =
        [(0.0, 0.0, 1.15), (2.5, 2.5, 1.77), (2.5, 5.0, 1.70), (5.0, 2.5, 1.84), (5.0, 5.0, 3.65), (10.0, 2.5, 2.27), (10.0, 5.0, 4.57)];
    let cells: Vec<TrendCell> = published.iter().map(|&(a, w, r)| TrendCell { amplitude: a, omega: w, rmse: r }).collect();
    let rep = trend_report(&cells);
    println!("\n{}", rep.table);
    for (d, ok) in rep.verdicts {
        println!("{} {d}", if ok { "PASS" } else { "FAIL" });
    }
    Ok(())
}
