use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Fixed connectivity of a triangle mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshTopology {
    pub vertex_count: usize,
    pub faces: Vec<[u32; 3]>,
    /// Undirected edges `(a, b)` with `a < b`, sorted and deduplicated.
    pub edges: Vec<[u32; 2]>,
    pub uvs: Option<Vec<[f64; 2]>>,
}

impl MeshTopology {
    /// Builds the topology and derives the edge set from the faces.
    pub fn new(vertex_count: usize, faces: Vec<[u32; 3]>, uvs: Option<Vec<[f64; 2]>>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for f in &faces {
            for &i in f {
                if i as usize >= vertex_count {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "face index {i} out of range for {vertex_count} vertices"
                    )));
                }
            }
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert([a.min(b), a.max(b)]);
            }
        }
        if let Some(uv) = &uvs {
            if uv.len() != vertex_count {
                return Err(Error::LengthMismatch {
                    what: "uv",
                    expected: vertex_count,
                    got: uv.len(),
                });
            }
        }
        Ok(Self {
            vertex_count,
            faces,
            edges: edges.into_iter().collect(),
            uvs,
        })
    }
}

/// Per-vertex kinematic state of one mesh at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub topology: Arc<MeshTopology>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub accelerations: Vec<Vec3>,
    pub t: usize,
    pub dt: f64,
}

impl MeshState {
    /// State at rest: zero velocity and acceleration.
    pub fn at_rest(topology: Arc<MeshTopology>, positions: Vec<Vec3>, dt: f64) -> Result<Self> {
        if positions.len() != topology.vertex_count {
            return Err(Error::LengthMismatch {
                what: "positions",
                expected: topology.vertex_count,
                got: positions.len(),
            });
        }
        let n = positions.len();
        Ok(Self {
            topology,
            positions,
            velocities: alloc::vec![Vec3::ZERO; n],
            accelerations: alloc::vec![Vec3::ZERO; n],
            t: 0,
            dt,
        })
    }

    /// State at frame `t` from a position track, with backward finite
    /// differences for velocity and acceleration. Frames before the start of
    /// the track are treated as being at rest.
    pub fn from_track(topology: Arc<MeshTopology>, track: &[&[Vec3]], t: usize, dt: f64) -> Result<Self> {
        let at = |k: isize| -> &[Vec3] { track[k.max(0) as usize] };
        let t_i = t as isize;
        if t >= track.len() {
            return Err(Error::MissingHistory {
                needed: t,
                available: track.len(),
            });
        }
        let (x0, x1, x2) = (at(t_i), at(t_i - 1), at(t_i - 2));
        let n = topology.vertex_count;
        if x0.len() != n {
            return Err(Error::LengthMismatch {
                what: "positions",
                expected: n,
                got: x0.len(),
            });
        }
        let velocities: Vec<Vec3> = (0..n).map(|i| (x0[i] - x1[i]) / dt).collect();
        let accelerations = (0..n)
            .map(|i| (velocities[i] - (x1[i] - x2[i]) / dt) / dt)
            .collect();
        Ok(Self {
            topology,
            positions: x0.to_vec(),
            velocities,
            accelerations,
            t,
            dt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Mesh,
    World,
    Body,
    Wind,
    Gravity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub receiver: u32,
    pub sender: u32,
    pub kind: EdgeKind,
}

/// Directed interaction edges, kept sorted by `(receiver, sender)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSet {
    pub edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>, kind: EdgeKind) -> Self {
        let mut edges: Vec<Edge> = pairs
            .into_iter()
            .map(|(receiver, sender)| Edge { receiver, sender, kind })
            .collect();
        edges.sort();
        edges.dedup();
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, receiver: u32, sender: u32) -> bool {
        self.edges
            .binary_search_by(|e| (e.receiver, e.sender).cmp(&(receiver, sender)))
            .is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.receiver, e.sender))
    }

    /// Union with another set; on duplicate pairs the first kind wins.
    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut edges = self.edges.clone();
        for e in &other.edges {
            if !self.contains(e.receiver, e.sender) {
                edges.push(*e);
            }
        }
        edges.sort_by_key(|e| (e.receiver, e.sender));
        EdgeSet { edges }
    }

    /// Both directions of every undirected mesh edge.
    pub fn from_undirected(edges: &[[u32; 2]], kind: EdgeKind) -> EdgeSet {
        EdgeSet::from_pairs(
            edges.iter().flat_map(|&[a, b]| [(a, b), (b, a)]),
            kind,
        )
    }
}

/// Material description of one garment layer, each scalar in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarmentAttributes {
    pub mass_density: f64,
    pub bend_stiffness: f64,
    pub stretch_stiffness: f64,
    pub friction: f64,
    /// 0 = inner layer, 1 = outer layer.
    pub layer: u8,
}

impl GarmentAttributes {
    pub const FEATURE_LEN: usize = 5;

    pub fn validate(&self) -> Result<()> {
        let vals = [self.mass_density, self.bend_stiffness, self.stretch_stiffness, self.friction];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidConfig("garment attributes must lie in [0, 1]".into()));
        }
        if self.layer > 1 {
            return Err(Error::InvalidConfig("layer index must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> [f64; Self::FEATURE_LEN] {
        [
            self.mass_density,
            self.bend_stiffness,
            self.stretch_stiffness,
            self.friction,
            self.layer as f64,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_deduplicated_face_edges() {
        let topo = MeshTopology::new(4, alloc::vec![[0, 1, 2], [1, 3, 2]], None).unwrap();
        assert_eq!(topo.edges, alloc::vec![[0, 1], [0, 2], [1, 2], [1, 3], [2, 3]]);
    }

    #[test]
    fn track_velocities_are_finite_differences() {
        let topo = Arc::new(MeshTopology::new(1, alloc::vec![], None).unwrap());
        let f0 = [Vec3::ZERO];
        let f1 = [Vec3::new(0.1, 0.0, 0.0)];
        let f2 = [Vec3::new(0.3, 0.0, 0.0)];
        let track: [&[Vec3]; 3] = [&f0, &f1, &f2];
        let s = MeshState::from_track(topo, &track, 2, 0.1).unwrap();
        assert!((s.velocities[0] - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((s.accelerations[0] - Vec3::new(10.0, 0.0, 0.0)).norm() < 1e-9);
    }
}
