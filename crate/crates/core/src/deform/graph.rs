use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::map::Map;

/// K-nearest-neighbour graph over active points, weighted by
/// `w = exp(−d² / 2σ²)` on distances at `t−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationGraph {
    pub sigma: f64,
    /// `(point id, [(neighbour id, weight)])`, ordered by point id.
    pub nodes: Vec<(usize, Vec<(usize, f64)>)>,
}

impl DeformationGraph {
    pub fn neighbors(&self, id: usize) -> Option<&[(usize, f64)]> {
        self.nodes.binary_search_by_key(&id, |n| n.0).ok().map(|i| self.nodes[i].1.as_slice())
    }

    pub fn num_edges(&self) -> usize {
        self.nodes.iter().map(|n| n.1.len()).sum()
    }
}

pub fn rbf_weight(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (2.0 * sigma * sigma)).exp()
}

/// Exhaustive K-NN over the previous-frame positions of active points. Ties
/// in distance are broken by id so the graph is deterministic.
pub fn build_graph(map: &Map, k: usize, sigma: f64) -> DeformationGraph {
    let pts: Vec<(usize, Vector3<f64>)> = map.active().map(|p| (p.id, p.previous_position())).collect();
    let mut nodes = Vec::with_capacity(pts.len());
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(pts.len());
    for (i, (id, x)) in pts.iter().enumerate() {
        cand.clear();
        cand.extend(pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, (jid, y))| ((x - y).norm_squared(), *jid)));
        let kk = k.min(cand.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if kk < cand.len() && kk > 0 {
            cand.select_nth_unstable_by(kk - 1, cmp);
        }
        cand.truncate(kk);
        cand.sort_by(cmp);
        let nbrs = cand.iter().map(|&(d2, j)| (j, rbf_weight(d2.sqrt(), sigma))).collect();
        nodes.push((*id, nbrs));
    }
    DeformationGraph { sigma, nodes }
}
