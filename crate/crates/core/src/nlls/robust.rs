use nalgebra::DVector;

/// 95th percentile of χ² with 2 degrees of freedom.
pub const CHI2_95_2DOF: f64 = 5.991;
/// 95th percentile of χ² with 3 degrees of freedom.
pub const CHI2_95_3DOF: f64 = 7.815;

/// Huber kernel on a squared Mahalanobis norm `e`:
/// `ρ(e) = e` for `e ≤ δ²`, `2δ√e − δ²` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Huber {
    pub threshold_sq: f64,
}

impl Huber {
    pub fn new(threshold_sq: f64) -> Self {
        assert!(threshold_sq > 0.0, "Huber threshold must be positive");
        Self { threshold_sq }
    }

    /// `(ρ(e), ρ'(e))`. The derivative is the IRLS weight, in `(0, 1]`.
    #[inline]
    pub fn evaluate(&self, e: f64) -> (f64, f64) {
        if e <= self.threshold_sq {
            (e, 1.0)
        } else {
            let d = self.threshold_sq.sqrt();
            let s = e.sqrt();
            (2.0 * d * s - self.threshold_sq, d / s)
        }
    }
}

/// Squared Mahalanobis norm of `residual` under per-dimension standard
/// deviations `sigma`, passed through the Huber kernel.
pub fn huber_apply(residual: &DVector<f64>, sigma: &[f64], threshold_sq: f64) -> (f64, f64) {
    Huber::new(threshold_sq).evaluate(mahalanobis_sq(residual, sigma))
}

pub fn mahalanobis_sq(residual: &DVector<f64>, sigma: &[f64]) -> f64 {
    residual.iter().zip(sigma).map(|(r, s)| (r / s) * (r / s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn chi_square_thresholds_match_cdf() {
        for (dof, t) in [(2.0, CHI2_95_2DOF), (3.0, CHI2_95_3DOF)] {
            let q = ChiSquared::new(dof).unwrap().inverse_cdf(0.95);
            assert!((q - t).abs() < 5e-4, "dof {dof}: {q} vs {t}");
        }
    }

    #[test]
    fn quadratic_regime() {
        let r = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(huber_apply(&r, &[1.0, 1.0], CHI2_95_2DOF), (1.0, 1.0));
        assert_eq!(huber_apply(&DVector::zeros(3), &[1.0; 3], CHI2_95_3DOF), (0.0, 1.0));
    }

    #[test]
    fn branches_meet_at_threshold() {
        let h = Huber::new(CHI2_95_3DOF);
        let (c, w) = h.evaluate(CHI2_95_3DOF);
        let d = CHI2_95_3DOF.sqrt();
        let linear = 2.0 * d * CHI2_95_3DOF.sqrt() - CHI2_95_3DOF;
        assert!((c - linear).abs() < 1e-12 && (c - CHI2_95_3DOF).abs() < 1e-12);
        assert_eq!(w, 1.0);
        let (_, w_out) = h.evaluate(CHI2_95_3DOF * (1.0 + 1e-9));
        assert!(w_out < 1.0 && w_out > 0.999);
    }

    #[test]
    fn weight_is_derivative_and_in_unit_interval() {
        let h = Huber::new(CHI2_95_2DOF);
        for e in [0.1, 3.0, 6.5, 40.0, 1e6] {
            let (c, w) = h.evaluate(e);
            let fd = (h.evaluate(e + 1e-6).0 - h.evaluate(e - 1e-6).0) / 2e-6;
            assert!((fd - w).abs() < 1e-6);
            assert!(w > 0.0 && w <= 1.0);
            assert_eq!(w == 1.0, e <= CHI2_95_2DOF);
            assert!(c <= e + 1e-12);
        }
    }

    #[test]
    fn sigma_scales_the_norm() {
        let r = DVector::from_vec(vec![10.0, -20.0, 0.0]);
        assert!((mahalanobis_sq(&r, &[10.0, 10.0, 1.0]) - 5.0).abs() < 1e-12);
    }
}
