//! End-to-end run on a simulated tube: `rigid_tube [scene.toml] [pipeline.toml]`.
use std::path::Path;

use deftrack::pipeline::{run_simulation, PipelineConfig};
use deftrack::sim::SceneConfig;

fn main() -> deftrack::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scene = match args.first() {
        Some(p) => SceneConfig::load(Path::new(p))?,
        None => SceneConfig::default(),
    };
    let cfg = match args.get(1) {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).map_err(|e| deftrack::Error::config("pipeline", e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let run = run_simulation(&scene, &cfg)?;
    print!("{}", run.report.to_text());
    Ok(())
}
