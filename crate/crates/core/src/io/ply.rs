//! ASCII PLY point clouds with an optional integer `id` per vertex.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Writes `points` as `x y z [id]` vertices; ids are emitted only when every
/// point carries one.
pub fn write_ply(path: &Path, points: &[(Option<usize>, Vector3<f64>)]) -> Result<()> {
    std::fs::write(path, to_ply(points)).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })
}

pub fn to_ply(points: &[(Option<usize>, Vector3<f64>)]) -> String {
    let with_id = !points.is_empty() && points.iter().all(|p| p.0.is_some());
    let mut s = String::with_capacity(64 * points.len() + 200);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if with_id {
        s.push_str("property int id\n");
    }
    s.push_str("end_header\n");
    for (id, p) in points {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if with_id {
            let _ = write!(s, " {}", id.expect("checked above"));
        }
        s.push('\n');
    }
    s
}

/// Reads an ASCII PLY written by [`write_ply`] (or any ASCII file whose
/// vertex element starts with `x y z`, optionally followed by `id`).
pub fn read_ply(path: &Path) -> Result<Vec<(Option<usize>, Vector3<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Path { path: path.into(), message: e.to_string() })?;
    let err = |line: usize, message: &str| Error::Parse { path: path.into(), line, message: message.into() };
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    if lines.next().map(|l| l.1.trim()) != Some("ply") {
        return Err(err(1, "missing `ply` magic"));
    }
    for (i, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, ..] if *f != "ascii" => return Err(err(i + 1, "only ASCII PLY is supported")),
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| err(i + 1, "bad vertex count"))?),
            ["property", _, name] if count.is_some() => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n = count.ok_or_else(|| err(0, "no vertex element"))?;
    if props.len() < 3 || props[..3] != ["x", "y", "z"] {
        return Err(err(0, "vertex element must start with x y z"));
    }
    let id_col = props.iter().position(|p| p == "id");
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.take(n) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < props.len() {
            return Err(err(i + 1, "short vertex row"));
        }
        let f = |k: usize| tok[k].parse::<f64>().map_err(|_| err(i + 1, "bad number"));
        let id = match id_col {
            Some(c) => Some(tok[c].parse::<usize>().map_err(|_| err(i + 1, "bad id"))?),
            None => None,
        };
        out.push((id, Vector3::new(f(0)?, f(1)?, f(2)?)));
    }
    if out.len() != n {
        return Err(err(0, "fewer vertices than declared"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ply");
        let pts = vec![(Some(4), Vector3::new(0.1, -2.0, 1e-17)), (Some(9), Vector3::new(1.0 / 3.0, 5.0, 7.25))];
        write_ply(&p, &pts).unwrap();
        assert_eq!(read_ply(&p).unwrap(), pts);
    }

    #[test]
    fn ids_are_dropped_when_incomplete() {
        let s = to_ply(&[(Some(1), Vector3::zeros()), (None, Vector3::x())]);
        assert!(!s.contains("property int id"));
        assert!(s.contains("element vertex 2"));
    }
}
