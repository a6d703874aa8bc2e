//! Renders a few frames of the simulated tube to PNG, next to a depth map,
//! and writes the ground-truth vertices of the first frame as PLY.
//!
//! ```text
//! cargo run --release --example render_scene [out_dir=target/render] [amplitude=10]
//! ```

use std::path::PathBuf;

use deftrack::image::ImageBuffer;
use deftrack::io::write_ply;
use deftrack::sim::{SceneConfig, SceneTruth};

fn main() -> deftrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/render".into()));
    let mut scene = SceneConfig::default();
    scene.deformation.amplitude = args.next().map_or(10.0, |s| s.parse().expect("amplitude"));
    scene.deformation.omega = 5.0;
    std::fs::create_dir_all(&out)?;
    let truth = SceneTruth::generate(&scene)?;
    println!("{} mesh vertices, {} triangles", truth.mesh.rest.len(), truth.mesh.triangles.len());

    for f in [0, 25, 50, 75, 99] {
        let r = truth.render_frame(f);
        r.image.save(&out.join(format!("frame_{f:04}.png")))?;
        let far = r.depth.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
        let depth = ImageBuffer::from_vec(
            r.image.width,
            r.image.height,
            r.depth.iter().map(|d| if d.is_finite() { 255.0 * (1.0 - d / far) } else { 0.0 }).collect(),
        )?;
        depth.save(&out.join(format!("depth_{f:04}.png")))?;
        println!("frame {f:3}: gain {:.2} bias {:+6.1}, {} vertices in view", r.gain, r.bias, truth.visible_vertices(f));
    }
    let pts: Vec<_> = truth.vertices(0).into_iter().map(|v| (None, v)).collect();
    write_ply(&out.join("vertices_0000.ply"), &pts)?;
    println!("wrote {}", out.display());
    Ok(())
}
