use std::f64::consts::TAU;

use nalgebra::Vector3;

use super::config::Geometry;

/// Triangulated rest surface.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub rest: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn build(geometry: &Geometry) -> Self {
        match *geometry {
            Geometry::Tube { radius, length, ring_vertices: nr, axial_vertices: na, closed_end } => {
                let mut rest = Vec::with_capacity(nr * na + 1);
                for j in 0..na {
                    let z = length * j as f64 / (na - 1) as f64;
                    for i in 0..nr {
                        let th = TAU * i as f64 / nr as f64;
                        rest.push(Vector3::new(radius * th.cos(), radius * th.sin(), z));
                    }
                }
                let mut triangles = Vec::with_capacity(2 * nr * na);
                for j in 0..na - 1 {
                    for i in 0..nr {
                        let a = j * nr + i;
                        let b = j * nr + (i + 1) % nr;
                        triangles.push([a, b, a + nr]);
                        triangles.push([b, b + nr, a + nr]);
                    }
                }
                if closed_end {
                    let c = rest.len();
                    rest.push(Vector3::new(0.0, 0.0, length));
                    let base = (na - 1) * nr;
                    for i in 0..nr {
                        triangles.push([base + i, base + (i + 1) % nr, c]);
                    }
                }
                Self { rest, triangles }
            }
            Geometry::Plane { width, length, offset, resolution: n } => {
                let mut rest = Vec::with_capacity(n * n);
                for j in 0..n {
                    let z = length * j as f64 / (n - 1) as f64;
                    for i in 0..n {
                        let x = width * (i as f64 / (n - 1) as f64 - 0.5);
                        rest.push(Vector3::new(x, offset, z));
                    }
                }
                let mut triangles = Vec::new();
                for j in 0..n - 1 {
                    for i in 0..n - 1 {
                        let a = j * n + i;
                        triangles.push([a, a + 1, a + n]);
                        triangles.push([a + 1, a + n + 1, a + n]);
                    }
                }
                Self { rest, triangles }
            }
        }
    }
}
