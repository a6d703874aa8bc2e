//! Amplitude × frequency sweep of the deforming tube, averaged over seeds.
//!
//! ```text
//! cargo run --release --example trend_sweep [scene.toml] [seeds=1,2,3] [workers=4]
//! ```

use deftrack::pipeline::{sweep_report, trend_sweep, PipelineConfig, DEFAULT_SWEEP_SEEDS, GRID_AMPLITUDES, GRID_OMEGAS};
use deftrack::sim::SceneConfig;

fn main() -> deftrack::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scene = match args.first() {
        Some(p) if p != "-" => SceneConfig::load(p.as_ref())?,
        _ => SceneConfig::default(),
    };
    let seeds: Vec<u64> = match args.get(1) {
        Some(s) => s.split(',').map(|t| t.trim().parse().expect("seed list like 1,2,3")).collect(),
        None => DEFAULT_SWEEP_SEEDS.to_vec(),
    };
    let workers = args.get(2).map_or(4, |w| w.parse().expect("worker count"));

    let start = std::time::Instant::now();
    let cells = trend_sweep(&scene, &PipelineConfig::default(), &GRID_AMPLITUDES, &GRID_OMEGAS, &seeds, workers);
    for c in &cells {
        let runs: Vec<String> = c
            .runs
            .iter()
            .map(|r| match r.failed_at {
                Some(f) => format!("seed {}: {:.4} (stopped at {f})", r.seed, r.rmse),
                None => format!("seed {}: {:.4}", r.seed, r.rmse),
            })
            .collect();
        println!("A={:<4} w={:<4} mean {:.4}  [{}]", c.amplitude, c.omega, c.mean_rmse(), runs.join(", "));
    }
    let report = sweep_report(&cells);
    println!("\n{}", report.table);
    for (desc, ok) in &report.verdicts {
        println!("{} {desc}", if *ok { "PASS" } else { "FAIL" });
    }
    println!("{} runs in {:.1} s", cells.len() * seeds.len(), start.elapsed().as_secs_f64());
    Ok(())
}
