//! Sparse Levenberg-Marquardt over heterogeneous parameter blocks.
//!
//! A [`Problem`] holds parameter blocks (Euclidean vectors or SE(3) poses
//! updated by left-multiplied twists) and residual blocks. Each residual
//! block is whitened by a diagonal standard deviation `Σ`, optionally passed
//! through a Huber kernel on its squared Mahalanobis norm, and scaled by a
//! term weight `λ`. The total cost is `Σ_b λ_b ρ(‖Σ_b⁻¹ r_b‖²)`.

mod robust;
mod skyline;
mod solver;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Twist};

pub use robust::{huber_apply, mahalanobis_sq, Huber, CHI2_95_2DOF, CHI2_95_3DOF};
pub use skyline::{Skyline, SkylineCholesky};
pub use solver::{solve, IterationLog, SolverOptions, SolverStatus, SolverSummary};

pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Vector(DVector<f64>),
    Pose(Pose),
}

impl ParamValue {
    pub fn tangent_dim(&self) -> usize {
        match self {
            ParamValue::Vector(v) => v.len(),
            ParamValue::Pose(_) => 6,
        }
    }

    /// `x ⊞ δ`: vector addition, or `exp(δ) · T` for poses.
    pub fn plus(&self, delta: &[f64]) -> ParamValue {
        match self {
            ParamValue::Vector(v) => ParamValue::Vector(v + DVector::from_column_slice(delta)),
            ParamValue::Pose(p) => ParamValue::Pose(p.retract(&Twist::from_column_slice(delta))),
        }
    }

    pub fn as_pose(&self) -> &Pose {
        match self {
            ParamValue::Pose(p) => p,
            ParamValue::Vector(_) => panic!("parameter block is not a pose"),
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            ParamValue::Vector(v) => v,
            ParamValue::Pose(_) => panic!("parameter block is not a vector"),
        }
    }
}

/// Residual model. Jacobians are with respect to each parameter's tangent
/// space (for poses, a left-multiplied twist `(ρ, ω)` at zero).
pub trait CostFunction: Send + Sync {
    fn residual_dim(&self) -> usize;

    /// Writes the raw (unwhitened) residual and, when requested, one
    /// `residual_dim × tangent_dim` Jacobian per parameter. Returns false when
    /// the residual cannot be evaluated at this state.
    fn evaluate(&self, params: &[&ParamValue], residual: &mut DVector<f64>, jacobians: Option<&mut [DMatrix<f64>]>) -> bool;
}

pub struct ResidualBlock {
    pub cost: Box<dyn CostFunction>,
    pub params: Vec<BlockId>,
    pub sigma: Vec<f64>,
    pub loss: Option<Huber>,
    pub scale: f64,
}

impl ResidualBlock {
    pub fn new(cost: impl CostFunction + 'static, params: Vec<BlockId>) -> Self {
        let m = cost.residual_dim();
        Self { cost: Box::new(cost), params, sigma: vec![1.0; m], loss: None, scale: 1.0 }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = vec![sigma; self.cost.residual_dim()];
        self
    }

    pub fn with_huber(mut self, threshold_sq: f64) -> Self {
        self.loss = Some(Huber::new(threshold_sq));
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

#[derive(Debug, Clone)]
struct ParameterBlock {
    value: ParamValue,
    fixed: bool,
}

#[derive(Default)]
pub struct Problem {
    blocks: Vec<ParameterBlock>,
    residuals: Vec<ResidualBlock>,
}

/// Per-block evaluation at the current state.
#[derive(Debug, Clone)]
pub struct BlockEval {
    pub residual: DVector<f64>,
    /// Squared Mahalanobis norm.
    pub mahalanobis_sq: f64,
    /// `λ ρ(e)`.
    pub cost: f64,
    /// IRLS weight `ρ'(e)` before the `λ` factor.
    pub weight: f64,
}

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_parameter(&mut self, value: ParamValue) -> BlockId {
        self.blocks.push(ParameterBlock { value, fixed: false });
        self.blocks.len() - 1
    }

    pub fn set_fixed(&mut self, id: BlockId, fixed: bool) {
        self.blocks[id].fixed = fixed;
    }

    pub fn is_fixed(&self, id: BlockId) -> bool {
        self.blocks[id].fixed
    }

    pub fn add_residual(&mut self, block: ResidualBlock) -> Result<usize> {
        let m = block.cost.residual_dim();
        if block.params.iter().any(|&p| p >= self.blocks.len()) {
            return Err(Error::SolverFailed("residual references an unknown parameter block".into()));
        }
        if block.sigma.len() != m || block.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::SolverFailed("noise scale must have one positive entry per residual dimension".into()));
        }
        if !(block.scale > 0.0) {
            return Err(Error::SolverFailed("term weight must be positive".into()));
        }
        self.residuals.push(block);
        Ok(self.residuals.len() - 1)
    }

    pub fn value(&self, id: BlockId) -> &ParamValue {
        &self.blocks[id].value
    }

    pub fn set_value(&mut self, id: BlockId, value: ParamValue) {
        assert_eq!(value.tangent_dim(), self.blocks[id].value.tangent_dim());
        self.blocks[id].value = value;
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_residuals(&self) -> usize {
        self.residuals.len()
    }

    pub fn residual(&self, r: usize) -> &ResidualBlock {
        &self.residuals[r]
    }

    pub fn has_free_block(&self) -> bool {
        self.blocks.iter().any(|b| !b.fixed)
    }

    fn values(&self) -> Vec<ParamValue> {
        self.blocks.iter().map(|b| b.value.clone()).collect()
    }

    /// Evaluates residual block `r` without Jacobians.
    pub fn evaluate_block(&self, r: usize) -> Option<BlockEval> {
        let rb = &self.residuals[r];
        let params: Vec<&ParamValue> = rb.params.iter().map(|&p| &self.blocks[p].value).collect();
        let mut res = DVector::zeros(rb.cost.residual_dim());
        if !rb.cost.evaluate(&params, &mut res, None) {
            return None;
        }
        let e = mahalanobis_sq(&res, &rb.sigma);
        let (c, w) = rb.loss.map_or((e, 1.0), |h| h.evaluate(e));
        Some(BlockEval { residual: res, mahalanobis_sq: e, cost: rb.scale * c, weight: w })
    }

    /// Total robust cost, or `None` if some block cannot be evaluated.
    pub fn cost(&self) -> Option<f64> {
        (0..self.residuals.len()).map(|r| self.evaluate_block(r).map(|b| b.cost)).sum()
    }

    /// Largest relative discrepancy between analytic Jacobians and central
    /// differences with step `h`, over every residual and parameter block:
    /// `‖J_analytic − J_numeric‖_F / max(‖J_numeric‖_F, 1e-12)`.
    pub fn check_jacobians(&self, h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for rb in &self.residuals {
            let m = rb.cost.residual_dim();
            let params: Vec<&ParamValue> = rb.params.iter().map(|&p| &self.blocks[p].value).collect();
            let mut res = DVector::zeros(m);
            let mut jac: Vec<DMatrix<f64>> = params.iter().map(|p| DMatrix::zeros(m, p.tangent_dim())).collect();
            if !rb.cost.evaluate(&params, &mut res, Some(&mut jac)) {
                return f64::INFINITY;
            }
            for (k, p) in params.iter().enumerate() {
                let n = p.tangent_dim();
                let mut num = DMatrix::zeros(m, n);
                for c in 0..n {
                    let mut delta = vec![0.0; n];
                    delta[c] = h;
                    let fwd = p.plus(&delta);
                    delta[c] = -h;
                    let bwd = p.plus(&delta);
                    let mut rf = DVector::zeros(m);
                    let mut rbk = DVector::zeros(m);
                    let mut pf = params.clone();
                    pf[k] = &fwd;
                    let ok_f = rb.cost.evaluate(&pf, &mut rf, None);
                    pf[k] = &bwd;
                    let ok_b = rb.cost.evaluate(&pf, &mut rbk, None);
                    if !(ok_f && ok_b) {
                        return f64::INFINITY;
                    }
                    num.set_column(c, &((rf - rbk) / (2.0 * h)));
                }
                let denom = num.norm().max(1e-12);
                worst = worst.max((&jac[k] - &num).norm() / denom);
            }
        }
        worst
    }
}
