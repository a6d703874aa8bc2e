//! Two-view map initialization.
//!
//! Pipeline: correspondences between frame 0 and frame `t` are lifted to unit
//! rays, an essential matrix is fitted with the eight-point algorithm inside
//! RANSAC, the four `(R, ±t)` hypotheses are disambiguated (smallest rotation
//! first, cheirality for the sign), and every inlier is triangulated with the
//! inverse-depth-weighted midpoint. The relative translation is normalized to
//! unit length, which fixes the scene unit.

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, skew, CameraModel, Pose, Ray};
use crate::map::{Map, MapPoint, Observation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCorrespondence {
    pub id: usize,
    pub ray0: Ray,
    pub ray_t: Ray,
    pub inlier: bool,
}

impl RayCorrespondence {
    pub fn new(id: usize, ray0: Ray, ray_t: Ray) -> Self {
        Self { id, ray0, ray_t, inlier: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialResult {
    /// Projected onto the essential manifold, singular values `(1, 1, 0)`.
    pub essential: Matrix3<f64>,
    /// `T_{t,0}`; filled by [`decompose_essential`] (identity until then).
    pub relative: Pose,
    /// Indices into the correspondence slice.
    pub inliers: Vec<usize>,
    pub mean_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitParams {
    pub ransac_iterations: usize,
    /// Inlier threshold in pixels; converted to an angle with the focal length.
    pub inlier_threshold_px: f64,
    pub early_exit_ratio: f64,
    pub min_parallax_deg: f64,
    pub min_points: usize,
    pub seed: u64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            ransac_iterations: 200,
            inlier_threshold_px: 1.0,
            early_exit_ratio: 0.7,
            min_parallax_deg: 0.5,
            min_points: 20,
            seed: 0,
        }
    }
}

/// Angular epipolar residual: the mean of the sines of the angles between
/// each ray and the epipolar plane induced by the other.
pub fn epipolar_residual(e: &Matrix3<f64>, c: &RayCorrespondence) -> f64 {
    let l0 = e * c.ray0.as_ref();
    let lt = e.transpose() * c.ray_t.as_ref();
    let v = c.ray_t.dot(&l0).abs();
    let n0 = l0.norm();
    let nt = lt.norm();
    if n0 < 1e-300 || nt < 1e-300 {
        return f64::INFINITY;
    }
    0.5 * (v / n0 + v / nt)
}

/// Conditioning transform for a bundle of rays: rotates the mean ray onto
/// the optical axis and stretches the lateral spread to unit RMS. Without it
/// a narrow field of view leaves the design matrix nearly rank deficient.
fn conditioner<'a>(rays: impl Iterator<Item = &'a Vector3<f64>>) -> Matrix3<f64> {
    let rays: Vec<&Vector3<f64>> = rays.collect();
    let mean: Vector3<f64> = rays.iter().copied().sum();
    let r = match UnitQuaternion::rotation_between(&mean, &Vector3::z()) {
        Some(q) => q.to_rotation_matrix().into_inner(),
        // mean opposite to z (or zero): a half turn about x is as good as any
        None => Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
    };
    let lateral = rays.iter().map(|v| (r * *v).xy().norm_squared()).sum::<f64>() / rays.len() as f64;
    let s = if lateral > 1e-30 { 1.0 / lateral.sqrt() } else { 1.0 };
    Matrix3::from_diagonal(&Vector3::new(s, s, 1.0)) * r
}

/// Linear eight-point estimate on conditioned rays followed by projection
/// onto the essential manifold. Needs at least eight correspondences.
pub fn eight_point(corrs: &[RayCorrespondence], subset: &[usize]) -> Option<Matrix3<f64>> {
    if subset.len() < 8 {
        return None;
    }
    let c0 = conditioner(subset.iter().map(|&k| corrs[k].ray0.as_ref()));
    let ct = conditioner(subset.iter().map(|&k| corrs[k].ray_t.as_ref()));
    // pad to at least 9 rows so the SVD exposes the full right null space
    let rows = subset.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (r, &k) in subset.iter().enumerate() {
        let x0 = c0 * corrs[k].ray0.as_ref();
        let xt = ct * corrs[k].ray_t.as_ref();
        for i in 0..3 {
            for j in 0..3 {
                a[(r, 3 * i + j)] = xt[i] * x0[j];
            }
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let e = Matrix3::from_fn(|i, j| vt[(k, 3 * i + j)]);
    // x_tᵀ (C_tᵀ E' C_0) x_0 = 0 in the original rays
    project_essential(&(ct.transpose() * e * c0))
}

/// Closest essential matrix (in Frobenius norm, up to scale): singular values
/// replaced by `(1, 1, 0)`.
pub fn project_essential(e: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = e.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let s = svd.singular_values;
    if !(s.max() > 0.0) || !s.iter().all(|v| v.is_finite()) {
        return None;
    }
    // nalgebra does not guarantee ordering for 3×3; zero the smallest
    let kmin = s.imin();
    let mut d = Vector3::from_element(1.0);
    d[kmin] = 0.0;
    Some(u * Matrix3::from_diagonal(&d) * vt)
}

/// Signed pair of angular residuals (one per epipolar plane).
fn signed_residuals(e: &Matrix3<f64>, c: &RayCorrespondence) -> [f64; 2] {
    let l0 = e * c.ray0.as_ref();
    let lt = e.transpose() * c.ray_t.as_ref();
    let v = c.ray_t.dot(&l0);
    [v / l0.norm().max(1e-300), v / lt.norm().max(1e-300)]
}

/// Minimises the angular epipolar residuals of `subset` over the five
/// degrees of freedom of an essential matrix (rotation, translation
/// direction) with damped Gauss-Newton and numeric derivatives.
pub fn refine_essential(e: &Matrix3<f64>, corrs: &[RayCorrespondence], subset: &[usize]) -> Option<Matrix3<f64>> {
    if subset.len() < 8 {
        return None;
    }
    let svd = e.svd(true, true);
    let (mut u, mut vt) = (svd.u?, svd.v_t?);
    let kmin = svd.singular_values.imin();
    if kmin != 2 {
        // move the null direction to the last column
        u.swap_columns(kmin, 2);
        vt.swap_rows(kmin, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let mut rot = UnitQuaternion::from_matrix(&(u * w * vt));
    let mut t: Vector3<f64> = u.column(2).into();
    let essential = |rot: &UnitQuaternion<f64>, t: &Vector3<f64>| skew(t) * rot.to_rotation_matrix().into_inner();
    let cost_of = |e: &Matrix3<f64>| -> f64 {
        subset.iter().map(|&k| signed_residuals(e, &corrs[k]).iter().map(|r| r * r).sum::<f64>()).sum()
    };
    let apply = |rot: &UnitQuaternion<f64>, t: &Vector3<f64>, d: &nalgebra::SVector<f64, 5>| {
        let b = tangent_basis(t);
        let r = UnitQuaternion::from_scaled_axis(Vector3::new(d[0], d[1], d[2])) * rot;
        let t = (t + b * nalgebra::Vector2::new(d[3], d[4])).normalize();
        (r, t)
    };
    let mut cost = cost_of(&essential(&rot, &t));
    let mut lambda = 1e-3;
    for _ in 0..30 {
        let e0 = essential(&rot, &t);
        let m = subset.len() * 2;
        let mut jac = DMatrix::<f64>::zeros(m, 5);
        let mut res = DVector::<f64>::zeros(m);
        for (row, &k) in subset.iter().enumerate() {
            let r = signed_residuals(&e0, &corrs[k]);
            res[2 * row] = r[0];
            res[2 * row + 1] = r[1];
        }
        let h = 1e-7;
        for p in 0..5 {
            let mut d = nalgebra::SVector::<f64, 5>::zeros();
            d[p] = h;
            let (rp, tp) = apply(&rot, &t, &d);
            d[p] = -h;
            let (rm, tm) = apply(&rot, &t, &d);
            let (ep, em) = (essential(&rp, &tp), essential(&rm, &tm));
            for (row, &k) in subset.iter().enumerate() {
                let (a, b) = (signed_residuals(&ep, &corrs[k]), signed_residuals(&em, &corrs[k]));
                jac[(2 * row, p)] = (a[0] - b[0]) / (2.0 * h);
                jac[(2 * row + 1, p)] = (a[1] - b[1]) / (2.0 * h);
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut improved = false;
        while lambda < 1e8 {
            let mut a = jtj.clone();
            for i in 0..5 {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let d = nalgebra::SVector::<f64, 5>::from_iterator(step.iter().copied());
            let (r2, t2) = apply(&rot, &t, &d);
            let c2 = cost_of(&essential(&r2, &t2));
            if c2 < cost {
                let rel = (cost - c2) / cost.max(1e-300);
                rot = r2;
                t = t2;
                cost = c2;
                lambda = (lambda * 0.5).max(1e-12);
                improved = rel > 1e-10;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    project_essential(&essential(&rot, &t))
}

/// Two unit vectors orthogonal to `t` (and to each other).
fn tangent_basis(t: &Vector3<f64>) -> nalgebra::Matrix3x2<f64> {
    let a = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let b1 = t.cross(&a).normalize();
    let b2 = t.normalize().cross(&b1);
    nalgebra::Matrix3x2::from_columns(&[b1, b2])
}

fn score(e: &Matrix3<f64>, corrs: &[RayCorrespondence], threshold: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    for (k, c) in corrs.iter().enumerate() {
        let r = epipolar_residual(e, c);
        if r < threshold {
            inliers.push(k);
            sum += r;
        }
    }
    let mean = if inliers.is_empty() { f64::INFINITY } else { sum / inliers.len() as f64 };
    (inliers, mean)
}

fn better(a: &(Vec<usize>, f64), b: &(Vec<usize>, f64)) -> bool {
    a.0.len() > b.0.len() || (a.0.len() == b.0.len() && a.1 < b.1)
}

/// Refits on the consensus set (linear, then nonlinear) while that does not
/// lose support.
fn polish(
    mut e: Matrix3<f64>,
    mut s: (Vec<usize>, f64),
    corrs: &[RayCorrespondence],
    threshold: f64,
) -> (Matrix3<f64>, (Vec<usize>, f64)) {
    for _ in 0..3 {
        if s.0.len() < 8 {
            break;
        }
        let Some(refit) = eight_point(corrs, &s.0).and_then(|e| refine_essential(&e, corrs, &s.0)) else { break };
        let rs = score(&refit, corrs, threshold);
        if rs.0.len() < s.0.len() {
            break;
        }
        let settled = rs.0 == s.0;
        e = refit;
        s = rs;
        if settled {
            break;
        }
    }
    (e, s)
}

/// RANSAC over eight-point hypotheses; `inlier_threshold` is an angle in
/// radians on the residual of [`epipolar_residual`]. The winner is refitted on
/// all of its inliers. Deterministic for a given `seed`.
pub fn estimate_essential_ransac(
    corrs: &[RayCorrespondence],
    iterations: usize,
    inlier_threshold: f64,
    early_exit_ratio: f64,
    seed: u64,
) -> Result<EssentialResult> {
    let n = corrs.len();
    if n < 8 {
        return Err(Error::InitializationFailed(format!("{n} correspondences, need at least 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Matrix3<f64>, (Vec<usize>, f64))> = None;
    for _ in 0..iterations.max(1) {
        let sample = rand::seq::index::sample(&mut rng, n, 8).into_vec();
        let Some(e) = eight_point(corrs, &sample) else { continue };
        let s = score(&e, corrs, inlier_threshold);
        if best.as_ref().is_none_or(|b| better(&s, &b.1)) {
            // local optimisation: polish each new champion on its support
            let (e, s) = polish(e, s, corrs, inlier_threshold);
            best = Some((e, s));
        }
        if best.as_ref().is_some_and(|b| b.1 .0.len() as f64 >= early_exit_ratio * n as f64) {
            break;
        }
    }
    let Some((e, s)) = best else {
        return Err(Error::InitializationFailed("no valid essential hypothesis".into()));
    };
    if s.0.len() < 8 {
        return Err(Error::InitializationFailed(format!("{} inliers, need at least 8", s.0.len())));
    }
    let (e, s) = polish(e, s, corrs, inlier_threshold);
    Ok(EssentialResult { essential: e, relative: Pose::identity(), inliers: s.0, mean_residual: s.1 })
}

/// Signed depths `(λ₀, λ₁)` of the mutually closest points on the two rays,
/// for `x_t = R x_0 + t`. `None` if the rays are parallel.
fn ray_depths(r: &Matrix3<f64>, t: &Vector3<f64>, c: &RayCorrespondence) -> Option<(f64, f64)> {
    // in frame 0: camera t sits at c1 = -Rᵀt and looks along f1 = Rᵀ x_t
    let f0 = c.ray0.into_inner();
    let f1 = r.transpose() * c.ray_t.as_ref();
    let b = -(r.transpose() * t);
    let n = f0.cross(&f1);
    let nn = n.norm_squared();
    if nn < 1e-24 {
        return None;
    }
    let l0 = b.cross(&f1).dot(&n) / nn;
    let l1 = b.cross(&f0).dot(&n) / nn;
    Some((l0, l1))
}

fn cheirality_count(r: &Matrix3<f64>, t: &Vector3<f64>, corrs: &[RayCorrespondence]) -> usize {
    corrs
        .iter()
        .filter(|c| ray_depths(r, t, c).is_some_and(|(a, b)| a > 0.0 && b > 0.0))
        .count()
}

/// Recovers `T_{t,0}` with unit translation from an essential matrix.
///
/// Of the two rotations the one with the smaller angle is taken and the
/// translation sign is decided by which hypothesis puts more points in front
/// of both cameras. If the small-rotation pair has no cheirality majority all
/// four hypotheses compete; a tie for the best count is an error.
pub fn decompose_essential(e: &Matrix3<f64>, corrs: &[RayCorrespondence]) -> Result<Pose> {
    let svd = e.svd(true, true);
    let (mut u, mut vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::InitializationFailed("SVD of essential matrix failed".into())),
    };
    // order so the null direction is the third column
    let kmin = svd.singular_values.imin();
    if kmin != 2 {
        u.swap_columns(kmin, 2);
        vt.swap_rows(kmin, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    let t = u.column(2).into_owned().normalize();

    let angle = |r: &Matrix3<f64>| ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    let small = if angle(&r1) <= angle(&r2) { r1 } else { r2 };
    let large = if angle(&r1) <= angle(&r2) { r2 } else { r1 };

    let pair = [(small, t), (small, -t)];
    let counts: Vec<usize> = pair.iter().map(|(r, t)| cheirality_count(r, t, corrs)).collect();
    let (r, t) = if counts[0] != counts[1] && counts[0].max(counts[1]) * 2 > corrs.len() {
        pair[if counts[0] > counts[1] { 0 } else { 1 }]
    } else {
        let all = [(small, t), (small, -t), (large, t), (large, -t)];
        let c: Vec<usize> = all.iter().map(|(r, t)| cheirality_count(r, t, corrs)).collect();
        let best = *c.iter().max().unwrap();
        if best == 0 || c.iter().filter(|&&v| v == best).count() > 1 {
            return Err(Error::InitializationFailed("ambiguous motion: cheirality tie".into()));
        }
        all[c.iter().position(|&v| v == best).unwrap()]
    };
    Ok(Pose::from_rotation_matrix(&r, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangulationError {
    LowParallax,
    NegativeDepth,
}

fn rays_in_frame0(ray0: &Ray, ray_t: &Ray, relative: &Pose) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let f0 = ray0.into_inner();
    let f1 = relative.rotation.inverse() * ray_t.as_ref();
    (f0, f1, relative.center())
}

fn check_depths(ray0: &Ray, ray_t: &Ray, relative: &Pose, x: &Vector3<f64>) -> std::result::Result<(), TriangulationError> {
    let in_t = relative.transform(x);
    if x.dot(ray0) > 0.0 && in_t.dot(ray_t) > 0.0 {
        Ok(())
    } else {
        Err(TriangulationError::NegativeDepth)
    }
}

/// Inverse-depth-weighted midpoint in frame 0.
///
/// The ray lengths come from the sine rule on the triangle formed by the
/// baseline and the two rays; the endpoints are averaged with weights
/// `1/d₀` and `1/d₁`.
pub fn triangulate_idwm(
    ray0: &Ray,
    ray_t: &Ray,
    relative: &Pose,
    min_parallax: f64,
) -> std::result::Result<Vector3<f64>, TriangulationError> {
    let (f0, f1, c1) = rays_in_frame0(ray0, ray_t, relative);
    if angle_between(&f0, &f1) < min_parallax {
        return Err(TriangulationError::LowParallax);
    }
    let cross = f0.cross(&f1).norm();
    let d0 = f1.cross(&c1).norm() / cross;
    let d1 = f0.cross(&c1).norm() / cross;
    if !(d0 > 0.0 && d1 > 0.0) {
        return Err(TriangulationError::NegativeDepth);
    }
    // the sine rule gives lengths only; reject configurations whose closest
    // points lie behind a camera
    let (l0, l1) = ray_depths(&relative.rotation_matrix(), &relative.translation, &RayCorrespondence::new(0, *ray0, *ray_t))
        .ok_or(TriangulationError::LowParallax)?;
    if l0 <= 0.0 || l1 <= 0.0 {
        return Err(TriangulationError::NegativeDepth);
    }
    let p0 = f0 * d0;
    let p1 = c1 + f1 * d1;
    let x = (p0 / d0 + p1 / d1) / (1.0 / d0 + 1.0 / d1);
    check_depths(ray0, ray_t, relative, &x)?;
    Ok(x)
}

/// Classical midpoint of the common perpendicular, in frame 0.
pub fn triangulate_midpoint(
    ray0: &Ray,
    ray_t: &Ray,
    relative: &Pose,
    min_parallax: f64,
) -> std::result::Result<Vector3<f64>, TriangulationError> {
    let (f0, f1, c1) = rays_in_frame0(ray0, ray_t, relative);
    if angle_between(&f0, &f1) < min_parallax {
        return Err(TriangulationError::LowParallax);
    }
    let (l0, l1) = ray_depths(&relative.rotation_matrix(), &relative.translation, &RayCorrespondence::new(0, *ray0, *ray_t))
        .ok_or(TriangulationError::LowParallax)?;
    if l0 <= 0.0 || l1 <= 0.0 {
        return Err(TriangulationError::NegativeDepth);
    }
    let x = 0.5 * (f0 * l0 + c1 + f1 * l1);
    check_depths(ray0, ray_t, relative, &x)?;
    Ok(x)
}

/// Median angle between `ray_t` and the rotated `ray0`, i.e. the parallax
/// left after compensating the rotation. Near zero for pure rotation.
pub fn median_parallax(corrs: &[RayCorrespondence], relative: &Pose) -> f64 {
    let mut a: Vec<f64> = corrs.iter().map(|c| angle_between(&(relative.rotation * c.ray0.as_ref()), c.ray_t.as_ref())).collect();
    if a.is_empty() {
        return 0.0;
    }
    a.sort_by(f64::total_cmp);
    a[a.len() / 2]
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub map: Map,
    /// `T_{t,0}`, unit translation.
    pub relative: Pose,
    pub essential: EssentialResult,
    pub correspondences: Vec<RayCorrespondence>,
}

/// Builds the initial map from matched observations in frame 0 and frame `t`.
/// Observations are matched by id; frame 0 pixels become the reference pixels.
pub fn initialize_map(obs0: &[Observation], obs_t: &[Observation], camera: &CameraModel, params: &InitParams) -> Result<Initialization> {
    let mut corrs: Vec<RayCorrespondence> = Vec::new();
    let mut refs = Vec::new();
    for o in obs0 {
        if let Some(ot) = obs_t.iter().find(|x| x.id == o.id) {
            corrs.push(RayCorrespondence::new(o.id, camera.unproject(&o.px), camera.unproject(&ot.px)));
            refs.push(o.px);
        }
    }
    let threshold = params.inlier_threshold_px / camera.focal();
    let mut est = estimate_essential_ransac(&corrs, params.ransac_iterations, threshold, params.early_exit_ratio, params.seed)?;
    let inlier_set: Vec<RayCorrespondence> = est.inliers.iter().map(|&k| corrs[k]).collect();
    let relative = decompose_essential(&est.essential, &inlier_set)?;
    let min_parallax = params.min_parallax_deg.to_radians();
    let parallax = median_parallax(&inlier_set, &relative);
    if parallax < min_parallax {
        return Err(Error::InitializationFailed(format!(
            "median parallax {:.3}° below {:.3}° (degenerate or near-pure rotation)",
            parallax.to_degrees(),
            params.min_parallax_deg
        )));
    }
    est.relative = relative;

    let mut is_inlier = vec![false; corrs.len()];
    for &k in &est.inliers {
        is_inlier[k] = true;
    }
    let mut points = Vec::new();
    for (k, c) in corrs.iter_mut().enumerate() {
        c.inlier = is_inlier[k];
        if !c.inlier {
            continue;
        }
        match triangulate_idwm(&c.ray0, &c.ray_t, &relative, min_parallax) {
            Ok(x) => points.push(MapPoint::new(c.id, x, refs[k])),
            Err(_) => c.inlier = false,
        }
    }
    if points.len() < params.min_points {
        return Err(Error::InitializationFailed(format!("{} points triangulated, need {}", points.len(), params.min_points)));
    }
    log::info!(
        "initialized {} points from {} correspondences ({} inliers), rotation {:.3}°",
        points.len(),
        corrs.len(),
        est.inliers.len(),
        relative.rotation_angle().to_degrees()
    );
    Ok(Initialization { map: Map::new(points), relative, essential: est, correspondences: corrs })
}
