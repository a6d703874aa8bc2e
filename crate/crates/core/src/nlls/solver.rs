use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::skyline::Skyline;
use super::{mahalanobis_sq, BlockId, ParamValue, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub function_tolerance: f64,
    /// Stop when the infinity norm of the cost gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the step norm falls below this.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
    /// Record one [`IterationLog`] per iteration.
    pub log: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            function_tolerance: 1e-8,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-6,
            max_damping: 1e16,
            log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// Normal equations could not be factorized, or the initial state was not
    /// evaluable. Parameters are left untouched.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub status: SolverStatus,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub log: Vec<IterationLog>,
}

impl SolverSummary {
    pub fn succeeded(&self) -> bool {
        self.status != SolverStatus::Failed
    }
}

/// Elimination order and scalar layout of the free blocks.
struct Structure {
    /// Free blocks in elimination order.
    order: Vec<BlockId>,
    /// Position in `order` of each block, `None` when fixed.
    position: Vec<Option<usize>>,
    /// Scalar offset of each position.
    offset: Vec<usize>,
    dim: usize,
    first: Vec<usize>,
}

impl Structure {
    fn build(problem: &Problem) -> Self {
        let nb = problem.blocks.len();
        let free: Vec<BlockId> = (0..nb).filter(|&b| !problem.blocks[b].fixed).collect();
        let mut adj: Vec<BTreeSet<BlockId>> = vec![BTreeSet::new(); nb];
        for rb in &problem.residuals {
            let fp: Vec<BlockId> = rb.params.iter().copied().filter(|&p| !problem.blocks[p].fixed).collect();
            for &a in &fp {
                for &b in &fp {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        let order = elimination_order(&free, &adj);
        let mut position = vec![None; nb];
        let mut offset = Vec::with_capacity(order.len());
        let mut dim = 0;
        for (i, &b) in order.iter().enumerate() {
            position[b] = Some(i);
            offset.push(dim);
            dim += problem.blocks[b].value.tangent_dim();
        }
        let mut first = vec![0; dim];
        for (i, &b) in order.iter().enumerate() {
            let mut f = offset[i];
            for nbr in &adj[b] {
                let j = position[*nbr].expect("free neighbour");
                if j < i {
                    f = f.min(offset[j]);
                }
            }
            let d = problem.blocks[b].value.tangent_dim();
            first[offset[i]..offset[i] + d].iter_mut().for_each(|v| *v = f);
        }
        Self { order, position, offset, dim, first }
    }
}

/// Reverse Cuthill-McKee over the sparse blocks, with blocks coupled to a
/// large share of the problem (poses) moved to the end so their dense rows
/// form the border of an arrow.
fn elimination_order(free: &[BlockId], adj: &[BTreeSet<BlockId>]) -> Vec<BlockId> {
    let n = free.len();
    let dense_degree = (n / 4).max(16);
    let (dense, sparse): (Vec<BlockId>, Vec<BlockId>) = free.iter().partition(|&&b| adj[b].len() > dense_degree);
    let is_dense = |b: BlockId| dense.binary_search(&b).is_ok();
    let degree = |b: BlockId| adj[b].iter().filter(|&&x| !is_dense(x)).count();

    let mut visited = vec![false; adj.len()];
    let mut cm = Vec::with_capacity(sparse.len());
    let mut seeds = sparse.clone();
    seeds.sort_by_key(|&b| (degree(b), b));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(b) = queue.pop_front() {
            cm.push(b);
            let mut nbrs: Vec<BlockId> = adj[b].iter().copied().filter(|&x| !is_dense(x) && !visited[x]).collect();
            nbrs.sort_by_key(|&x| (degree(x), x));
            for x in nbrs {
                visited[x] = true;
                queue.push_back(x);
            }
        }
    }
    cm.reverse();
    cm.extend(dense);
    cm
}

struct Linearization {
    hessian: Skyline,
    gradient: Vec<f64>,
    cost: f64,
}

fn linearize(problem: &Problem, values: &[ParamValue], s: &Structure) -> Option<Linearization> {
    let mut hessian = Skyline::new(s.first.clone());
    let mut gradient = vec![0.0; s.dim];
    let mut cost = 0.0;
    for rb in &problem.residuals {
        let m = rb.cost.residual_dim();
        let params: Vec<&ParamValue> = rb.params.iter().map(|&p| &values[p]).collect();
        let mut res = DVector::zeros(m);
        let mut jac: Vec<DMatrix<f64>> = params.iter().map(|p| DMatrix::zeros(m, p.tangent_dim())).collect();
        if !rb.cost.evaluate(&params, &mut res, Some(&mut jac)) {
            return None;
        }
        let inv_sigma: Vec<f64> = rb.sigma.iter().map(|s| 1.0 / s).collect();
        for (i, is) in inv_sigma.iter().enumerate() {
            res[i] *= is;
            for j in jac.iter_mut() {
                j.row_mut(i).scale_mut(*is);
            }
        }
        let e = res.norm_squared();
        let (c, w) = rb.loss.map_or((e, 1.0), |h| h.evaluate(e));
        cost += rb.scale * c;
        let w = rb.scale * w;

        for (ka, &a) in rb.params.iter().enumerate() {
            let Some(pa) = s.position[a] else { continue };
            let oa = s.offset[pa];
            let ja = &jac[ka];
            let ga = ja.tr_mul(&res);
            for (i, v) in ga.iter().enumerate() {
                gradient[oa + i] += w * v;
            }
            for (kb, &b) in rb.params.iter().enumerate() {
                let Some(pb) = s.position[b] else { continue };
                if pb > pa {
                    continue;
                }
                let ob = s.offset[pb];
                let blk = ja.tr_mul(&jac[kb]);
                for r in 0..blk.nrows() {
                    let cmax = if pa == pb { r + 1 } else { blk.ncols() };
                    for c in 0..cmax {
                        hessian.add(oa + r, ob + c, w * blk[(r, c)]);
                    }
                }
            }
        }
    }
    Some(Linearization { hessian, gradient, cost })
}

fn total_cost(problem: &Problem, values: &[ParamValue]) -> Option<f64> {
    let mut cost = 0.0;
    for rb in &problem.residuals {
        let params: Vec<&ParamValue> = rb.params.iter().map(|&p| &values[p]).collect();
        let mut res = DVector::zeros(rb.cost.residual_dim());
        if !rb.cost.evaluate(&params, &mut res, None) {
            return None;
        }
        let e = mahalanobis_sq(&res, &rb.sigma);
        cost += rb.scale * rb.loss.map_or(e, |h| h.evaluate(e).0);
    }
    cost.is_finite().then_some(cost)
}

fn apply_step(values: &[ParamValue], s: &Structure, step: &[f64]) -> Vec<ParamValue> {
    let mut out = values.to_vec();
    for (i, &b) in s.order.iter().enumerate() {
        let d = values[b].tangent_dim();
        out[b] = values[b].plus(&step[s.offset[i]..s.offset[i] + d]);
    }
    out
}

/// Minimizes the problem's robust cost in place.
///
/// Each iteration linearizes with IRLS weights `λ ρ'(e)` and solves the damped
/// normal equations `(H + μ diag(H)) Δ = −g` by envelope Cholesky. The step is
/// accepted when it lowers the true cost; then `μ ← μ · max(1/3, 1 − (2ϱ − 1)³)`
/// where `ϱ` is the ratio of actual to predicted decrease. A rejected step, or
/// a failed factorization, multiplies `μ` by 10. The accepted cost sequence is
/// therefore non-increasing.
pub fn solve(problem: &mut Problem, options: &SolverOptions) -> SolverSummary {
    let s = Structure::build(problem);
    let mut values = problem.values();
    let mut log = Vec::new();
    let failed = |initial: f64, it: usize, log: Vec<IterationLog>| SolverSummary {
        status: SolverStatus::Failed,
        initial_cost: initial,
        final_cost: initial,
        iterations: it,
        log,
    };

    let Some(mut lin) = linearize(problem, &values, &s) else {
        return failed(f64::NAN, 0, log);
    };
    let initial_cost = lin.cost;
    if !lin.cost.is_finite() || lin.gradient.iter().any(|g| !g.is_finite()) {
        return failed(initial_cost, 0, log);
    }
    if s.dim == 0 || lin.cost == 0.0 {
        return SolverSummary { status: SolverStatus::Converged, initial_cost, final_cost: lin.cost, iterations: 0, log };
    }

    let mut mu = options.initial_damping;
    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;
    let mut factorized_once = false;
    while iterations < options.max_iterations {
        let grad_inf = lin.gradient.iter().fold(0.0f64, |m, g| m.max(2.0 * g.abs()));
        if grad_inf < options.gradient_tolerance {
            status = SolverStatus::Converged;
            break;
        }
        iterations += 1;

        let diag = lin.hessian.diagonal();
        let mut damped = lin.hessian.clone();
        let damping: Vec<f64> = diag.iter().map(|d| mu * d.max(1e-9)).collect();
        damped.add_diagonal(&damping);
        let Some(chol) = damped.factorize() else {
            mu *= 10.0;
            if options.log {
                log.push(IterationLog { iteration: iterations, cost: lin.cost, damping: mu, step_norm: f64::NAN, accepted: false });
            }
            if mu > options.max_damping {
                if !factorized_once {
                    return failed(initial_cost, iterations, log);
                }
                status = SolverStatus::Converged;
                break;
            }
            continue;
        };
        factorized_once = true;
        let neg_g: Vec<f64> = lin.gradient.iter().map(|g| -g).collect();
        let step = chol.solve(&neg_g);
        let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();

        // predicted decrease of the quadratic model 2gᵀΔ + ΔᵀHΔ
        let g_dot: f64 = lin.gradient.iter().zip(&step).map(|(g, d)| g * d).sum();
        let h_quad: f64 = lin.hessian.sym_matvec(&step).iter().zip(&step).map(|(a, b)| a * b).sum();
        let predicted = -(2.0 * g_dot + h_quad);

        let candidate = apply_step(&values, &s, &step);
        let new_cost = total_cost(problem, &candidate);
        let accepted = matches!(new_cost, Some(c) if c < lin.cost);
        if options.log {
            log.push(IterationLog { iteration: iterations, cost: new_cost.unwrap_or(f64::INFINITY), damping: mu, step_norm, accepted });
        }
        if accepted {
            let new_cost = new_cost.unwrap();
            let decrease = lin.cost - new_cost;
            let rho = if predicted > 0.0 { decrease / predicted } else { 1.0 };
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            let old_cost = lin.cost;
            values = candidate;
            match linearize(problem, &values, &s) {
                Some(l) if l.gradient.iter().all(|g| g.is_finite()) => lin = l,
                _ => return failed(initial_cost, iterations, log),
            }
            if decrease <= options.function_tolerance * old_cost || step_norm < options.step_tolerance || lin.cost == 0.0 {
                status = SolverStatus::Converged;
                break;
            }
        } else {
            if step_norm < options.step_tolerance {
                status = SolverStatus::Converged;
                break;
            }
            mu *= 10.0;
            if mu > options.max_damping {
                status = SolverStatus::Converged;
                break;
            }
        }
    }

    for (b, v) in values.into_iter().enumerate() {
        problem.blocks[b].value = v;
    }
    SolverSummary { status, initial_cost, final_cost: lin.cost, iterations, log }
}
