//! The sparse Levenberg-Marquardt solver on its own: fit a circle to points
//! with 20% gross outliers, with and without the Huber kernel.
//!
//! ```text
//! cargo run --example robust_solver
//! ```

use deftrack::nlls::{solve, CostFunction, ParamValue, Problem, ResidualBlock, SolverOptions, CHI2_95_2DOF};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Radial distance of one point to the circle `(cx, cy, r)`.
struct CircleResidual {
    x: f64,
    y: f64,
}

impl CostFunction for CircleResidual {
    fn residual_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, p: &[&ParamValue], r: &mut DVector<f64>, j: Option<&mut [DMatrix<f64>]>) -> bool {
        let c = p[0].as_vector();
        let (dx, dy) = (self.x - c[0], self.y - c[1]);
        let d = dx.hypot(dy);
        if d < 1e-12 {
            return false;
        }
        r[0] = d - c[2];
        if let Some(j) = j {
            j[0][(0, 0)] = -dx / d;
            j[0][(0, 1)] = -dy / d;
            j[0][(0, 2)] = -1.0;
        }
        true
    }
}

fn fit(points: &[(f64, f64)], huber: bool) -> (DVector<f64>, usize) {
    let mut problem = Problem::new();
    let c = problem.add_parameter(ParamValue::Vector(DVector::from_vec(vec![0.5, -0.5, 1.0])));
    for &(x, y) in points {
        let mut block = ResidualBlock::new(CircleResidual { x, y }, vec![c]).with_sigma(0.05);
        if huber {
            block = block.with_huber(CHI2_95_2DOF);
        }
        problem.add_residual(block).expect("valid block");
    }
    let summary = solve(&mut problem, &SolverOptions::default());
    (problem.value(c).as_vector().clone(), summary.iterations)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (cx, cy, r) = (2.0, -1.0, 3.0);
    let points: Vec<(f64, f64)> = (0..200)
        .map(|i| {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let rr = if i % 5 == 0 { r + rng.random_range(1.0..4.0) } else { r + rng.random_range(-0.05..0.05) };
            (cx + rr * t.cos(), cy + rr * t.sin())
        })
        .collect();
    for huber in [false, true] {
        let (c, it) = fit(&points, huber);
        println!(
            "{:<13} centre ({:.3}, {:.3}) radius {:.3} after {it} iterations (truth {cx}, {cy}, {r})",
            if huber { "Huber:" } else { "least squares:" },
            c[0],
            c[1],
            c[2]
        );
    }
}
