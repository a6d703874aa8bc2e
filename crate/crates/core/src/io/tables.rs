//! CSV tables: poses, feature tracks, observations, point trajectories and
//! solver iteration logs.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::map::Observation;
use crate::nlls::IterationLog;
use crate::tracker::{TrackStatus, TrackedFeature};

/// `T_{C^t W}` of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub frame: usize,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub qw: f64,
}

impl PoseRow {
    pub fn new(frame: usize, pose: &Pose) -> Self {
        let [tx, ty, tz, qx, qy, qz, qw] = pose.to_array();
        Self { frame, tx, ty, tz, qx, qy, qz, qw }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_array([self.tx, self.ty, self.tz, self.qx, self.qy, self.qz, self.qw])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub frame: usize,
    pub id: usize,
    pub u_x: f64,
    pub u_y: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ssim: f64,
    pub status: TrackStatus,
}

impl TrackRow {
    pub fn new(frame: usize, f: &TrackedFeature) -> Self {
        Self {
            frame,
            id: f.id,
            u_x: f.current_px.x,
            u_y: f.current_px.y,
            alpha: f.alpha,
            beta: f.beta,
            ssim: f.ssim,
            status: f.status,
        }
    }
}

/// A 2-D measurement; `(frame, id, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub frame: usize,
    pub id: usize,
    pub u: f64,
    pub v: f64,
}

/// Position of point `id` at `frame`, in the reference camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub id: usize,
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PointRow {
    pub fn new(id: usize, frame: usize, p: &Vector3<f64>) -> Self {
        Self { id, frame, x: p.x, y: p.y, z: p.z }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub frame: usize,
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

impl IterationRow {
    pub fn new(frame: usize, l: &IterationLog) -> Self {
        Self { frame, iteration: l.iteration, cost: l.cost, damping: l.damping, step_norm: l.step_norm, accepted: l.accepted }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |e: csv::Error| Error::Path { path: path.into(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
    Ok(())
}

/// Rows of a headed CSV file; malformed rows report their line number.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.into(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_poses(path: &Path, poses: &[(usize, Pose)]) -> Result<()> {
    write_csv(path, &poses.iter().map(|(f, p)| PoseRow::new(*f, p)).collect::<Vec<_>>())
}

pub fn read_poses(path: &Path) -> Result<Vec<(usize, Pose)>> {
    Ok(read_csv::<PoseRow>(path)?.iter().map(|r| (r.frame, r.pose())).collect())
}

pub fn write_observations(path: &Path, frames: &[Vec<Observation>]) -> Result<()> {
    let rows: Vec<ObservationRow> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, obs)| obs.iter().map(move |o| ObservationRow { frame: f, id: o.id, u: o.px.x, v: o.px.y }))
        .collect();
    write_csv(path, &rows)
}

/// Observations grouped by frame; frames without rows (up to the largest
/// frame index) come back empty.
pub fn read_observations(path: &Path) -> Result<Vec<Vec<Observation>>> {
    let rows: Vec<ObservationRow> = read_csv(path)?;
    let n = rows.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let mut out = vec![Vec::new(); n];
    for r in rows {
        out[r.frame].push(Observation::new(r.id, Vector2::new(r.u, r.v)));
    }
    Ok(out)
}

/// Point positions keyed by frame, then id.
pub type PointTable = BTreeMap<usize, BTreeMap<usize, Vector3<f64>>>;

pub fn write_points(path: &Path, rows: &[PointRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_points(path: &Path) -> Result<PointTable> {
    let mut out = PointTable::new();
    for r in read_csv::<PointRow>(path)? {
        out.entry(r.frame).or_default().insert(r.id, r.position());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn poses_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.csv");
        let poses = vec![
            (0, Pose::identity()),
            (7, Pose::new(UnitQuaternion::from_euler_angles(0.1, -0.7, 2.9), Vector3::new(1.0 / 3.0, -1e-9, 42.0))),
        ];
        write_poses(&p, &poses).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("frame,tx,ty,tz,qx,qy,qz,qw\n"));
        let back = read_poses(&p).unwrap();
        for ((fa, a), (fb, b)) in poses.iter().zip(&back) {
            assert_eq!(fa, fb);
            assert_eq!(a.to_array(), b.to_array());
        }
    }

    #[test]
    fn observations_group_by_frame() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        let frames = vec![vec![Observation::new(2, Vector2::new(1.5, 2.5))], vec![], vec![Observation::new(0, Vector2::new(-1.0, 0.25))]];
        write_observations(&p, &frames).unwrap();
        assert_eq!(read_observations(&p).unwrap(), frames);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        std::fs::write(&p, "id,frame,x,y,z\n1,0,1,2,3\n2,0,oops,2,3\n").unwrap();
        match read_points(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn track_status_is_lowercase() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tracks.csv");
        let row = TrackRow { frame: 1, id: 3, u_x: 1.0, u_y: 2.0, alpha: 1.1, beta: -3.0, ssim: 0.9, status: TrackStatus::Rejected };
        write_csv(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "frame,id,u_x,u_y,alpha,beta,ssim,status\n1,3,1.0,2.0,1.1,-3.0,0.9,rejected\n");
    }
}
