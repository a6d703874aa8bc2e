use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Active,
    Lost,
}

/// A 2-D measurement of feature `id` in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub id: usize,
    pub px: Vector2<f64>,
}

impl Observation {
    pub fn new(id: usize, px: Vector2<f64>) -> Self {
        Self { id, px }
    }
}

/// A tracked surface point.
///
/// The current position is `anchor + displacement + increment`, where the
/// anchor is the triangulated initial position (world = first camera frame),
/// `displacement` accumulates the deformation committed in past frames and
/// `increment` is the deformation being estimated for the current frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "MapPointRecord", into = "MapPointRecord")]
pub struct MapPoint {
    pub id: usize,
    pub anchor: Vector3<f64>,
    pub displacement: Vector3<f64>,
    pub increment: Vector3<f64>,
    /// Cached `X^{t-1}`, advanced by exactly the committed increment so that
    /// re-evaluating a committed frame reproduces its residuals bit for bit.
    previous: Vector3<f64>,
    pub reference_px: Vector2<f64>,
    pub status: PointStatus,
}

impl MapPoint {
    pub fn new(id: usize, anchor: Vector3<f64>, reference_px: Vector2<f64>) -> Self {
        Self {
            id,
            anchor,
            displacement: Vector3::zeros(),
            increment: Vector3::zeros(),
            previous: anchor,
            reference_px,
            status: PointStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == PointStatus::Active
    }

    /// Position at the end of the previous frame.
    pub fn previous_position(&self) -> Vector3<f64> {
        self.previous
    }

    pub fn position(&self) -> Vector3<f64> {
        self.previous + self.increment
    }

    /// Folds the current increment into the cumulative displacement.
    pub fn commit(&mut self) {
        self.displacement += self.increment;
        self.previous += self.increment;
        self.increment = Vector3::zeros();
    }
}

#[derive(Serialize, Deserialize)]
struct MapPointRecord {
    id: usize,
    anchor: Vector3<f64>,
    displacement: Vector3<f64>,
    reference_px: Vector2<f64>,
    status: PointStatus,
}

impl From<MapPointRecord> for MapPoint {
    fn from(r: MapPointRecord) -> Self {
        let mut p = MapPoint::new(r.id, r.anchor, r.reference_px);
        p.displacement = r.displacement;
        p.previous = r.anchor + r.displacement;
        p.status = r.status;
        p
    }
}

impl From<MapPoint> for MapPointRecord {
    fn from(p: MapPoint) -> Self {
        Self { id: p.id, anchor: p.anchor, displacement: p.displacement, reference_px: p.reference_px, status: p.status }
    }
}

/// Map points ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Map {
    pub points: Vec<MapPoint>,
}

impl Map {
    pub fn new(mut points: Vec<MapPoint>) -> Self {
        points.sort_by_key(|p| p.id);
        Self { points }
    }

    pub fn get(&self, id: usize) -> Option<&MapPoint> {
        self.points.binary_search_by_key(&id, |p| p.id).ok().map(|i| &self.points[i])
    }

    pub fn get_mut(&mut self, id: usize) -> Option<&mut MapPoint> {
        self.points.binary_search_by_key(&id, |p| p.id).ok().map(move |i| &mut self.points[i])
    }

    pub fn active(&self) -> impl Iterator<Item = &MapPoint> {
        self.points.iter().filter(|p| p.is_active())
    }

    pub fn num_active(&self) -> usize {
        self.active().count()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Scales anchors and displacements, e.g. to change the map unit.
    pub fn scale(&mut self, s: f64) {
        for p in &mut self.points {
            p.anchor *= s;
            p.displacement *= s;
            p.increment *= s;
            p.previous *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_moves_increment_into_displacement() {
        let mut p = MapPoint::new(3, Vector3::new(1.0, 2.0, 3.0), Vector2::zeros());
        p.increment = Vector3::new(0.1, 0.0, -0.2);
        let before = p.position();
        p.commit();
        assert_eq!(p.position(), before);
        assert_eq!(p.previous_position(), before);
        assert_eq!(p.increment, Vector3::zeros());
    }

    #[test]
    fn lookup_by_id() {
        let map = Map::new(vec![
            MapPoint::new(7, Vector3::zeros(), Vector2::zeros()),
            MapPoint::new(2, Vector3::x(), Vector2::zeros()),
        ]);
        assert_eq!(map.get(2).unwrap().anchor, Vector3::x());
        assert!(map.get(5).is_none());
    }
}
