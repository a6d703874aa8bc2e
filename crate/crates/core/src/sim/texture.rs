//! Multi-octave 3-D value noise, evaluated at rest coordinates so the texture
//! moves with the surface.

use nalgebra::Vector3;

use super::config::TextureConfig;

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x, y, z] {
        h = h.wrapping_add(v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// C² quintic fade, keeps second derivatives continuous for the tracker.
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Single-octave value noise in `[-1, 1]`.
pub fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (u, v, w) = (fade(p.x - fx), fade(p.y - fy), fade(p.z - fz));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - u } else { u };
                let wy = if dy == 0 { 1.0 - v } else { v };
                let wz = if dz == 0 { 1.0 - w } else { w };
                acc += wx * wy * wz * lattice(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

/// Fractal sum normalized to `[-1, 1]`.
pub fn fractal_noise(cfg: &TextureConfig, p: &Vector3<f64>) -> f64 {
    filtered_noise(cfg, p, 0.0)
}

/// Octave weight for a pixel footprint: octaves approaching the Nyquist
/// limit (in cycles per pixel) fade out instead of aliasing.
fn band_limit(cycles_per_pixel: f64) -> f64 {
    let (lo, hi) = (0.12, 0.25);
    let t = ((cycles_per_pixel - lo) / (hi - lo)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

/// [`fractal_noise`] with octaves attenuated for a pixel footprint of
/// `footprint` scene units; `0` means unfiltered. The normalization ignores the
/// attenuation so that fading only removes detail.
pub fn filtered_noise(cfg: &TextureConfig, p: &Vector3<f64>, footprint: f64) -> f64 {
    let mut amp = 1.0;
    let mut freq = cfg.base_frequency;
    let mut sum = 0.0;
    let mut norm = 0.0;
    for o in 0..cfg.octaves.max(1) {
        // decorrelate octaves with a per-octave seed and offset
        let q = p * freq + Vector3::new(0.37, 0.11, 0.73) * o as f64;
        let k = band_limit(freq * footprint);
        if k > 0.0 {
            sum += k * amp * value_noise(cfg.seed.wrapping_add(o as u64 * 1013), &q);
        }
        norm += amp;
        amp *= cfg.persistence;
        freq *= 2.0;
    }
    sum / norm
}

/// Surface intensity at a rest coordinate seen with a pixel footprint of
/// `footprint` scene units.
pub fn intensity(cfg: &TextureConfig, rest: &Vector3<f64>, footprint: f64) -> f64 {
    cfg.mean + 0.5 * cfg.contrast * filtered_noise(cfg, rest, footprint)
}
