//! Per-frame joint estimation of camera pose and point deformation.
//!
//! Each frame runs the same schedule:
//!
//! 1. constant-velocity prediction of `T_{C^t W}`;
//! 2. pose-only robust refinement against the previous-frame geometry;
//! 3. K-NN deformation graph on the previous-frame positions;
//! 4. joint Levenberg-Marquardt over the pose and one increment `δ_i` per
//!    observed point, with reprojection, spatial (`w_ij (δ_i − δ_j)`) and
//!    temporal (`δ_i`) terms;
//! 5. commit `D_i += δ_i` and drop points whose post-fit reprojection error
//!    fails the χ² gate. Lost points are never re-acquired.
//!
//! Noise scales given in scene milli-units (`sigma_spa`, `sigma_tmp`,
//! `graph_sigma`) are converted to map units through
//! [`TrackingParams::scene_scale`], the number of scene milli-units per map
//! unit. After monocular initialization one map unit is the initialization
//! baseline.

mod costs;
mod graph;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};
use crate::map::{Map, Observation, PointStatus};
use crate::nlls::{solve, ParamValue, Problem, ResidualBlock, SolverOptions, SolverStatus, SolverSummary, CHI2_95_2DOF, CHI2_95_3DOF};

pub use costs::{ReprojectionCost, SpatialCost, TemporalCost};
pub use graph::{build_graph, rbf_weight, DeformationGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingParams {
    /// Neighbours per point in the deformation graph.
    pub k: usize,
    /// Radial-basis influence radius, scene milli-units.
    pub graph_sigma: f64,
    /// Reprojection noise, pixels.
    pub sigma_rep: f64,
    /// Spatial-term noise, scene milli-units.
    pub sigma_spa: f64,
    /// Temporal-term noise, scene milli-units.
    pub sigma_tmp: f64,
    pub lambda_spa: f64,
    pub lambda_tmp: f64,
    /// Scene milli-units per map unit.
    pub scene_scale: f64,
    /// Squared whitened reprojection error above which a point is lost.
    pub lost_threshold: f64,
    pub min_observations: usize,
    pub solver: SolverOptions,
    pub rigid_solver: SolverOptions,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            k: 20,
            graph_sigma: 15.0,
            sigma_rep: 1.0,
            sigma_spa: 10.0,
            sigma_tmp: 10.0,
            lambda_spa: 1.0,
            lambda_tmp: 1.0,
            scene_scale: 1.0,
            lost_threshold: CHI2_95_2DOF,
            min_observations: 6,
            solver: SolverOptions::default(),
            rigid_solver: SolverOptions::default(),
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("graph_sigma", self.graph_sigma),
            ("sigma_rep", self.sigma_rep),
            ("sigma_spa", self.sigma_spa),
            ("sigma_tmp", self.sigma_tmp),
            ("lambda_spa", self.lambda_spa),
            ("lambda_tmp", self.lambda_tmp),
            ("scene_scale", self.scene_scale),
            ("lost_threshold", self.lost_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        if self.min_observations < 3 {
            return Err(Error::config("min_observations", "must be at least 3"));
        }
        Ok(())
    }

    fn to_map(&self, milli: f64) -> f64 {
        milli / self.scene_scale
    }
}

/// Constant-velocity prediction `(T₁ T₂⁻¹) T₁` from the last two
/// world→camera poses; with one pose, that pose.
pub fn predict_pose(last: &Pose, before_last: Option<&Pose>) -> Pose {
    match before_last {
        Some(prev) => last.compose(&prev.inverse()).compose(last),
        None => *last,
    }
}

/// Pose-only robust reprojection fit against `X^{t−1}`. Returns the seed
/// unchanged when there are too few usable observations or the solve fails.
pub fn refine_pose_rigid(
    predicted: &Pose,
    observations: &[Observation],
    map: &Map,
    camera: &CameraModel,
    params: &TrackingParams,
) -> (Pose, Option<SolverSummary>) {
    let mut problem = Problem::new();
    let pose = problem.add_parameter(ParamValue::Pose(*predicted));
    let mut n = 0;
    for o in observations {
        let Some(p) = map.get(o.id).filter(|p| p.is_active()) else { continue };
        let x = p.previous_position();
        if camera.project(&predicted.transform(&x)).is_err() {
            continue;
        }
        let cost = ReprojectionCost { camera: camera.clone(), point: x, observed: o.px };
        problem
            .add_residual(ResidualBlock::new(cost, vec![pose]).with_sigma(params.sigma_rep).with_huber(CHI2_95_2DOF))
            .expect("well-formed block");
        n += 1;
    }
    if n < params.min_observations {
        return (*predicted, None);
    }
    let summary = solve(&mut problem, &params.rigid_solver);
    if summary.status == SolverStatus::Failed {
        return (*predicted, Some(summary));
    }
    (*problem.value(pose).as_pose(), Some(summary))
}

#[derive(Debug, Clone)]
pub struct FrameState {
    pub index: usize,
    /// `T_{C^t W}`.
    pub pose: Pose,
    pub predicted_pose: Pose,
    pub rigid_pose: Pose,
    /// Committed increments `(id, δ)`.
    pub deltas: Vec<(usize, Vector3<f64>)>,
    /// Observations that entered the joint solve.
    pub observations: Vec<Observation>,
    pub rigid_summary: Option<SolverSummary>,
    pub summary: Option<SolverSummary>,
    /// True when the joint solve failed and the rigid pose was kept.
    pub flagged: bool,
    pub newly_lost: Vec<usize>,
    pub graph_edges: usize,
}

impl FrameState {
    pub fn converged(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.succeeded())
    }

    pub fn median_delta_norm(&self) -> f64 {
        let mut v: Vec<f64> = self.deltas.iter().map(|d| d.1.norm()).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

/// Joint problem of one frame. Block 0 is the pose; `delta_blocks[k]` belongs
/// to `ids[k]`.
pub struct JointProblem {
    pub problem: Problem,
    pub pose: usize,
    pub ids: Vec<usize>,
    pub delta_blocks: Vec<usize>,
    pub observations: Vec<Observation>,
}

/// Assembles the reprojection, spatial and temporal blocks for the points in
/// `observations` (all assumed active and in front of `seed`). Increments start
/// at zero.
pub fn build_joint_problem(
    seed: &Pose,
    observations: &[Observation],
    map: &Map,
    graph: &DeformationGraph,
    camera: &CameraModel,
    params: &TrackingParams,
) -> JointProblem {
    let mut problem = Problem::new();
    let pose = problem.add_parameter(ParamValue::Pose(*seed));
    let mut ids = Vec::with_capacity(observations.len());
    let mut delta_blocks = Vec::with_capacity(observations.len());
    let mut block_of = std::collections::HashMap::new();
    for o in observations {
        let b = problem.add_parameter(ParamValue::Vector(DVector::zeros(3)));
        ids.push(o.id);
        delta_blocks.push(b);
        block_of.insert(o.id, b);
    }
    let s_spa = params.to_map(params.sigma_spa);
    let s_tmp = params.to_map(params.sigma_tmp);
    for (o, &b) in observations.iter().zip(&delta_blocks) {
        let x = map.get(o.id).expect("observed point in map").previous_position();
        let rep = ReprojectionCost { camera: camera.clone(), point: x, observed: o.px };
        problem
            .add_residual(ResidualBlock::new(rep, vec![pose, b]).with_sigma(params.sigma_rep).with_huber(CHI2_95_2DOF))
            .expect("well-formed block");
        problem
            .add_residual(
                ResidualBlock::new(TemporalCost, vec![b]).with_sigma(s_tmp).with_huber(CHI2_95_3DOF).with_scale(params.lambda_tmp),
            )
            .expect("well-formed block");
        for &(j, w) in graph.neighbors(o.id).unwrap_or(&[]) {
            // neighbours without an observation this frame keep δ = 0 implicitly
            let Some(&bj) = block_of.get(&j) else { continue };
            problem
                .add_residual(
                    ResidualBlock::new(SpatialCost { weight: w }, vec![b, bj])
                        .with_sigma(s_spa)
                        .with_huber(CHI2_95_3DOF)
                        .with_scale(params.lambda_spa),
                )
                .expect("well-formed block");
        }
    }
    JointProblem { problem, pose, ids, delta_blocks, observations: observations.to_vec() }
}

/// Registers one frame: see the module docs for the schedule. `history` holds
/// the previous poses, most recent last (at least one).
pub fn track_frame(
    index: usize,
    observations: &[Observation],
    camera: &CameraModel,
    map: &mut Map,
    history: &[Pose],
    params: &TrackingParams,
) -> Result<FrameState> {
    let last = history.last().ok_or_else(|| Error::TrackingFailed { frame: index, reason: "no previous pose".into() })?;
    let predicted = predict_pose(last, history.len().checked_sub(2).map(|i| &history[i]));

    // no re-acquisition: active points the tracker no longer sees are lost
    let mut newly_lost = Vec::new();
    let seen: std::collections::HashSet<usize> = observations.iter().map(|o| o.id).collect();
    for p in map.points.iter_mut().filter(|p| p.is_active()) {
        if !seen.contains(&p.id) {
            p.status = PointStatus::Lost;
            newly_lost.push(p.id);
        }
    }

    let (rigid_pose, rigid_summary) = refine_pose_rigid(&predicted, observations, map, camera, params);

    let mut usable = Vec::new();
    for o in observations {
        let Some(p) = map.get_mut(o.id).filter(|p| p.is_active()) else { continue };
        if camera.project(&rigid_pose.transform(&p.previous_position())).is_ok() {
            usable.push(*o);
        } else {
            p.status = PointStatus::Lost;
            newly_lost.push(p.id);
        }
    }
    usable.sort_by_key(|o| o.id);
    if usable.len() < params.min_observations {
        return Err(Error::TrackingFailed {
            frame: index,
            reason: format!("{} usable observations, need {}", usable.len(), params.min_observations),
        });
    }

    let graph = build_graph(map, params.k, params.to_map(params.graph_sigma));
    let mut joint = build_joint_problem(&rigid_pose, &usable, map, &graph, camera, params);
    let summary = solve(&mut joint.problem, &params.solver);
    let flagged = summary.status == SolverStatus::Failed;

    let pose = if flagged { rigid_pose } else { *joint.problem.value(joint.pose).as_pose() };
    let mut deltas = Vec::with_capacity(joint.ids.len());
    for (&id, &b) in joint.ids.iter().zip(&joint.delta_blocks) {
        let d = if flagged {
            Vector3::zeros()
        } else {
            let v = joint.problem.value(b).as_vector();
            Vector3::new(v[0], v[1], v[2])
        };
        let p = map.get_mut(id).expect("observed point in map");
        p.increment = d;
        p.commit();
        deltas.push((id, d));
    }
    if flagged {
        log::warn!("frame {index}: joint solve failed, keeping the rigid pose");
    }

    let gate = params.lost_threshold * params.sigma_rep * params.sigma_rep;
    for o in &usable {
        let p = map.get_mut(o.id).expect("observed point in map");
        let ok = camera.project(&pose.transform(&p.previous_position())).is_ok_and(|uv| (uv - o.px).norm_squared() <= gate);
        if !ok {
            p.status = PointStatus::Lost;
            newly_lost.push(p.id);
        }
    }
    log::debug!(
        "frame {index}: {} observations, {} edges, cost {:.4e} -> {:.4e} in {} iterations, {} lost",
        usable.len(),
        graph.num_edges(),
        summary.initial_cost,
        summary.final_cost,
        summary.iterations,
        newly_lost.len()
    );

    Ok(FrameState {
        index,
        pose,
        predicted_pose: predicted,
        rigid_pose,
        deltas,
        observations: usable,
        rigid_summary,
        summary: Some(summary),
        flagged,
        newly_lost,
        graph_edges: graph.num_edges(),
    })
}

/// Owns the map and the pose history of one sequence.
#[derive(Debug, Clone)]
pub struct DeformTracker {
    pub camera: CameraModel,
    pub params: TrackingParams,
    pub map: Map,
    /// `T_{C^t W}` for every registered frame, starting with the reference.
    pub poses: Vec<(usize, Pose)>,
}

impl DeformTracker {
    /// Starts from the reference frame `index` at the world origin.
    pub fn new(camera: CameraModel, params: TrackingParams, map: Map, index: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self { camera, params, map, poses: vec![(index, Pose::identity())] })
    }

    pub fn last_pose(&self) -> &Pose {
        &self.poses.last().expect("reference pose").1
    }

    pub fn track_frame(&mut self, index: usize, observations: &[Observation]) -> Result<FrameState> {
        let tail: Vec<Pose> = self.poses.iter().rev().take(2).rev().map(|p| p.1).collect();
        let state = track_frame(index, observations, &self.camera, &mut self.map, &tail, &self.params)?;
        self.poses.push((index, state.pose));
        Ok(state)
    }
}
