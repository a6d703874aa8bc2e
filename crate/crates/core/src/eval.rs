//! Scale-aligned reconstruction error and trajectory diagnostics.
//!
//! Monocular reconstructions carry an unknown scale, so every frame is
//! aligned to ground truth with its own scalar `s` before the RMSE is taken.
//! Both clouds live in the reference camera frame, so no rotation or
//! translation is fitted. Correspondence is by point id.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form `argmin_s Σ‖s X̂ − X‖²`.
pub fn optimal_scale(estimated: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<f64> {
    if estimated.is_empty() || estimated.len() != truth.len() {
        return Err(Error::Undefined(format!("{} estimated vs {} true points", estimated.len(), truth.len())));
    }
    let num: f64 = estimated.iter().zip(truth).map(|(e, t)| e.dot(t)).sum();
    let den: f64 = estimated.iter().map(|e| e.norm_squared()).sum();
    if !(den > 0.0) {
        return Err(Error::Undefined("estimated cloud is all zero; scale is undefined".into()));
    }
    Ok(num / den)
}

/// `√(Σ‖s X̂ − X‖² / n)`.
pub fn rmse_frame(estimated: &[Vector3<f64>], truth: &[Vector3<f64>], scale: f64) -> Result<f64> {
    if estimated.is_empty() || estimated.len() != truth.len() {
        return Err(Error::Undefined(format!("{} estimated vs {} true points", estimated.len(), truth.len())));
    }
    let sq: f64 = estimated.iter().zip(truth).map(|(e, t)| (e * scale - t).norm_squared()).sum();
    Ok((sq / estimated.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame: usize,
    pub scale: f64,
    pub rmse: f64,
    pub points: usize,
    /// Median ‖δ‖ of the frame, in ground-truth units (scaled by `s`).
    pub median_delta: f64,
    pub runtime_ms: f64,
}

/// Aligns and scores one frame. `estimated` and `truth` are matched by index.
pub fn evaluate_frame(frame: usize, estimated: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<FrameEval> {
    let scale = optimal_scale(estimated, truth)?;
    let rmse = rmse_frame(estimated, truth, scale)?;
    Ok(FrameEval { frame, scale, rmse, points: estimated.len(), median_delta: 0.0, runtime_ms: 0.0 })
}

/// Points keyed by frame, then id.
pub type FrameClouds = BTreeMap<usize, BTreeMap<usize, Vector3<f64>>>;

/// Scores every estimated frame against the truth of the same frame, pairing
/// points by id. Frames without a common id are skipped.
pub fn evaluate_clouds(estimated: &FrameClouds, truth: &FrameClouds) -> Result<Vec<FrameEval>> {
    let mut out = Vec::new();
    for (frame, est) in estimated {
        let Some(gt) = truth.get(frame) else { continue };
        let (e, t): (Vec<Vector3<f64>>, Vec<Vector3<f64>>) = est.iter().filter_map(|(id, x)| gt.get(id).map(|g| (*x, *g))).unzip();
        if !e.is_empty() {
            out.push(evaluate_frame(*frame, &e, &t)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Undefined("no frame shares a point id with the truth".into()));
    }
    Ok(out)
}

/// Similarity (`s`, `R`, `t`) minimizing `Σ‖s R a + t − b‖²` (Umeyama).
pub fn umeyama(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<(f64, Matrix3<f64>, Vector3<f64>)> {
    let n = a.len();
    if n < 3 || n != b.len() {
        return Err(Error::Undefined(format!("similarity alignment needs ≥ 3 pairs, got {n}")));
    }
    let ma = a.iter().sum::<Vector3<f64>>() / n as f64;
    let mb = b.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    let mut var_a = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (y - mb) * (x - ma).transpose();
        var_a += (x - ma).norm_squared();
    }
    cov /= n as f64;
    var_a /= n as f64;
    if !(var_a > 0.0) {
        return Err(Error::Undefined("degenerate trajectory for alignment".into()));
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    let d = svd.singular_values;
    let scale = (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_a;
    let t = mb - scale * r * ma;
    Ok((scale, r, t))
}

/// Absolute trajectory error of camera centres after one similarity
/// alignment over the whole sequence (a diagnostic beyond the point RMSE).
pub fn absolute_trajectory_error(estimated: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<f64> {
    let (s, r, t) = umeyama(estimated, truth)?;
    let sq: f64 = estimated.iter().zip(truth).map(|(e, g)| (s * r * e + t - g).norm_squared()).sum();
    Ok((sq / estimated.len() as f64).sqrt())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameEval>,
    /// Mean of the per-frame RMSEs.
    pub sequence_rmse: f64,
    pub ate: Option<f64>,
    pub mean_runtime_ms: f64,
    pub max_runtime_ms: f64,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameEval>, ate: Option<f64>) -> Self {
        let n = frames.len().max(1) as f64;
        let sequence_rmse = frames.iter().map(|f| f.rmse).sum::<f64>() / n;
        let mean_runtime_ms = frames.iter().map(|f| f.runtime_ms).sum::<f64>() / n;
        let max_runtime_ms = frames.iter().map(|f| f.runtime_ms).fold(0.0, f64::max);
        Self { frames, sequence_rmse, ate, mean_runtime_ms, max_runtime_ms }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame", "scale", "rmse", "points", "median_delta", "runtime_ms"]).unwrap();
        for f in &self.frames {
            w.write_record([
                f.frame.to_string(),
                format!("{:.9}", f.scale),
                format!("{:.9}", f.rmse),
                f.points.to_string(),
                format!("{:.9}", f.median_delta),
                format!("{:.3}", f.runtime_ms),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Long format (`frame, metric, value`) for plotting tools.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("frame,metric,value\n");
        for f in &self.frames {
            for (m, v) in [("scale", f.scale), ("rmse", f.rmse), ("points", f.points as f64), ("median_delta", f.median_delta)] {
                let _ = writeln!(out, "{},{m},{v:.9}", f.frame);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>10} {:>10} {:>7} {:>12}", "frame", "scale", "rmse", "points", "median |d|");
        for f in &self.frames {
            let _ = writeln!(out, "{:>6} {:>10.4} {:>10.4} {:>7} {:>12.5}", f.frame, f.scale, f.rmse, f.points, f.median_delta);
        }
        let _ = writeln!(out, "sequence RMSE (mean of per-frame): {:.4}", self.sequence_rmse);
        if let Some(a) = self.ate {
            let _ = writeln!(out, "ATE after similarity alignment (diagnostic): {a:.4}");
        }
        if self.max_runtime_ms > 0.0 {
            let _ = writeln!(out, "frame runtime: mean {:.1} ms, max {:.1} ms", self.mean_runtime_ms, self.max_runtime_ms);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCell {
    pub amplitude: f64,
    pub omega: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub table: String,
    /// `(description, holds)`; orderings whose cells are missing are omitted.
    pub verdicts: Vec<(String, bool)>,
}

impl TrendReport {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.1)
    }
}

fn cell(cells: &[TrendCell], a: f64, w: f64) -> Option<f64> {
    cells.iter().find(|c| c.amplitude == a && c.omega == w).map(|c| c.rmse)
}

/// Amplitude × frequency table plus the ordering checks: rigid below mild
/// below strong-and-fast deformation, and non-decreasing error in `ω` for
/// every amplitude ≥ 5.
pub fn trend_report(cells: &[TrendCell]) -> TrendReport {
    let mut amps: Vec<f64> = cells.iter().map(|c| c.amplitude).collect();
    let mut omegas: Vec<f64> = cells.iter().map(|c| c.omega).collect();
    for v in [&mut amps, &mut omegas] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut table = String::new();
    let _ = write!(table, "{:>8} |", "A \\ w");
    for w in &omegas {
        let _ = write!(table, " {w:>8.2}");
    }
    table.push('\n');
    for a in &amps {
        let _ = write!(table, "{a:>8.2} |");
        for w in &omegas {
            match cell(cells, *a, *w) {
                Some(r) => {
                    let _ = write!(table, " {r:>8.4}");
                }
                None => {
                    let _ = write!(table, " {:>8}", "-");
                }
            }
        }
        table.push('\n');
    }

    let mut verdicts = Vec::new();
    let rigid = cells.iter().filter(|c| c.amplitude == 0.0).map(|c| c.rmse).reduce(f64::min);
    if let (Some(r0), Some(mild), Some(strong)) = (rigid, cell(cells, 2.5, 2.5), cell(cells, 10.0, 5.0)) {
        verdicts.push((format!("RMSE(A=0) {r0:.4} < RMSE(A=2.5,w=2.5) {mild:.4} < RMSE(A=10,w=5) {strong:.4}"), r0 < mild && mild < strong));
    }
    for a in amps.iter().filter(|a| **a >= 5.0) {
        let row: Vec<(f64, f64)> = omegas.iter().filter_map(|w| cell(cells, *a, *w).map(|r| (*w, r))).collect();
        if row.len() >= 2 {
            let ok = row.windows(2).all(|p| p[1].1 >= p[0].1);
            let desc = row.iter().map(|(w, r)| format!("w={w}: {r:.4}")).collect::<Vec<_>>().join(", ");
            verdicts.push((format!("A={a}: non-decreasing in w ({desc})"), ok));
        }
    }
    TrendReport { table, verdicts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|_| Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(1.0..9.0))).collect()
    }

    fn sum_sq(e: &[Vector3<f64>], t: &[Vector3<f64>], s: f64) -> f64 {
        e.iter().zip(t).map(|(a, b)| (a * s - b).norm_squared()).sum()
    }

    /// Golden-section minimization of a unimodal scalar function.
    fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn trivial_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = cloud(&mut rng, 20);
        assert!((optimal_scale(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let doubled: Vec<_> = t.iter().map(|p| p * 2.0).collect();
        assert!((optimal_scale(&doubled, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(optimal_scale(&[Vector3::zeros()], &[Vector3::x()]), Err(Error::Undefined(_))));
        assert!(optimal_scale(&[], &[]).is_err());
    }

    #[test]
    fn scale_matches_line_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let e = cloud(&mut rng, 30);
            let t = cloud(&mut rng, 30);
            let s = optimal_scale(&e, &t).unwrap();
            let g = golden(|s| sum_sq(&e, &t, s), -10.0, 10.0);
            assert!((s - g).abs() < 1e-6);
            for d in [-1e-3, 1e-3] {
                assert!(sum_sq(&e, &t, s + d) >= sum_sq(&e, &t, s));
            }
        }
    }

    #[test]
    fn rmse_closed_forms() {
        let t = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 4.0)];
        assert_eq!(rmse_frame(&t, &t, 1.0).unwrap(), 0.0);
        let e = [Vector3::new(3.0, 4.0, 0.0)];
        assert_eq!(rmse_frame(&e, &[Vector3::zeros()], 1.0).unwrap(), 5.0);
        assert!(rmse_frame(&[], &[], 1.0).is_err());
    }

    #[test]
    fn aligned_rmse_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = cloud(&mut rng, 50);
        let e: Vec<_> = t.iter().map(|p| p * 0.37 + Vector3::new(rng.random_range(-0.1..0.1), 0.0, 0.05)).collect();
        let base = evaluate_frame(0, &e, &t).unwrap().rmse;
        for k in [0.1, 3.0, 42.0] {
            let ek: Vec<_> = e.iter().map(|p| p * k).collect();
            assert!((evaluate_frame(0, &ek, &t).unwrap().rmse - base).abs() < 1e-9);
        }
    }

    #[test]
    fn umeyama_recovers_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = cloud(&mut rng, 40);
        let r = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        let b: Vec<_> = a.iter().map(|p| r * p * 2.5 + Vector3::new(1.0, -2.0, 0.5)).collect();
        let (s, rot, t) = umeyama(&a, &b).unwrap();
        assert!((s - 2.5).abs() < 1e-10);
        assert!((rot - r.to_rotation_matrix().matrix()).norm() < 1e-10);
        assert!((t - Vector3::new(1.0, -2.0, 0.5)).norm() < 1e-9);
        assert!(absolute_trajectory_error(&a, &b).unwrap() < 1e-9);
    }

    fn paper_cells() -> Vec<TrendCell> {
        // reconstruction RMSE (mm) of the original simulated sweep
        [(0.0, 0.0, 1.15), (2.5, 2.5, 1.77), (2.5, 5.0, 1.70), (5.0, 2.5, 1.84), (5.0, 5.0, 3.65), (10.0, 2.5, 2.27), (10.0, 5.0, 4.57)]
            .iter()
            .map(|&(amplitude, omega, rmse)| TrendCell { amplitude, omega, rmse })
            .collect()
    }

    #[test]
    fn published_sweep_passes_the_trend_verdicts() {
        let rep = trend_report(&paper_cells());
        assert_eq!(rep.verdicts.len(), 3);
        assert!(rep.passed(), "{:?}", rep.verdicts);
        assert!(rep.table.contains("1.1500") && rep.table.contains("4.5700"));
    }

    #[test]
    fn shuffled_sweep_fails() {
        let mut cells = paper_cells();
        let values: Vec<f64> = cells.iter().map(|c| c.rmse).rev().collect();
        for (c, v) in cells.iter_mut().zip(values) {
            c.rmse = v;
        }
        assert!(!trend_report(&cells).passed());
    }

    #[test]
    fn report_formats() {
        let rep = EvalReport::from_frames(
            vec![
                FrameEval { frame: 1, scale: 2.0, rmse: 0.5, points: 10, median_delta: 0.0, runtime_ms: 3.0 },
                FrameEval { frame: 2, scale: 2.1, rmse: 1.5, points: 9, median_delta: 0.1, runtime_ms: 5.0 },
            ],
            Some(0.2),
        );
        assert_eq!(rep.sequence_rmse, 1.0);
        assert_eq!(rep.max_runtime_ms, 5.0);
        assert_eq!(rep.to_csv().lines().count(), 3);
        assert_eq!(rep.to_long_csv().lines().count(), 9);
        assert!(rep.to_text().contains("sequence RMSE"));
    }

    #[test]
    fn clouds_pair_by_id_and_skip_unmatched_frames() {
        let est: FrameClouds = [
            (0, [(1, Vector3::new(1.0, 0.0, 0.0)), (2, Vector3::new(0.0, 2.0, 0.0)), (9, Vector3::new(5.0, 5.0, 5.0))].into()),
            (4, [(7, Vector3::x())].into()),
        ]
        .into();
        let truth: FrameClouds = [(0, [(2, Vector3::new(0.0, 4.0, 0.0)), (1, Vector3::new(2.0, 0.0, 0.0))].into())].into();
        let frames = evaluate_clouds(&est, &truth).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].points, 2);
        assert!((frames[0].scale - 2.0).abs() < 1e-12 && frames[0].rmse < 1e-12);
        assert!(evaluate_clouds(&est, &FrameClouds::new()).is_err());
    }
}
