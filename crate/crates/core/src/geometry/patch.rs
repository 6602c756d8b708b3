//! Patch partition of a garment over its UV square.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{EdgeKind, EdgeSet, MeshTopology, Vec3};
use crate::error::{Error, Result};
use crate::math;

/// Disjoint cover of a mesh's vertices by patches of neighboring UV-grid
/// cells. Patches are UV-adjacent when their cells share a side.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMap {
    pub members: Vec<Vec<u32>>,
    pub vertex_patch: Vec<u32>,
    /// UV cell coordinates of every patch.
    pub cells: Vec<(u32, u32)>,
    /// Directed patch mesh edges (both directions of each adjacency).
    pub mesh_edges: EdgeSet,
}

impl PatchMap {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The patch holding `vertex` followed by its UV-adjacent patches.
    pub fn neighbor_patches(&self, vertex: usize) -> Vec<u32> {
        let own = self.vertex_patch[vertex];
        let mut out = alloc::vec![own];
        out.extend(
            self.mesh_edges
                .edges
                .iter()
                .filter(|e| e.receiver == own)
                .map(|e| e.sender),
        );
        out
    }

    /// Arithmetic mean of member values per patch.
    pub fn average(&self, values: &[Vec3]) -> Vec<Vec3> {
        self.members
            .iter()
            .map(|m| {
                let mut acc = Vec3::ZERO;
                for &v in m {
                    acc += values[v as usize];
                }
                acc / m.len() as f64
            })
            .collect()
    }

    /// Checks that every vertex appears in exactly one non-empty patch.
    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        let mut seen = alloc::vec![false; vertex_count];
        for (p, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::EmptyPatch(p));
            }
            for &v in m {
                let v = v as usize;
                if v >= vertex_count || seen[v] || self.vertex_patch[v] as usize != p {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "vertex {v} is not covered exactly once"
                    )));
                }
                seen[v] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("patch map does not cover every vertex".into()));
        }
        Ok(())
    }
}

/// Distinct values of one UV coordinate, within 1e-9.
fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v.len()
}

/// Partitions the UV square into cells of `patch_size x patch_size` vertices.
///
/// The vertex resolution along u and v is taken from the number of distinct
/// UV values when they form a full grid, otherwise from `sqrt(N)`. Cells that
/// receive no vertex are dropped.
pub fn patchify(topology: &MeshTopology, patch_size: usize) -> Result<PatchMap> {
    let uvs = topology.uvs.as_ref().ok_or(Error::MissingUv)?;
    if patch_size == 0 {
        return Err(Error::InvalidPatchSize(patch_size));
    }
    let n = topology.vertex_count;
    let (mut nu, mut nv) = (distinct(uvs.iter().map(|uv| uv[0])), distinct(uvs.iter().map(|uv| uv[1])));
    if nu * nv != n {
        let side = (math::sqrt(n as f64) + 0.5) as usize;
        nu = side.max(1);
        nv = side.max(1);
    }
    let index = |t: f64, res: usize| -> u32 {
        let i = t.clamp(0.0, 1.0) * (res.max(2) - 1) as f64 + 0.5;
        (math::floor(i) as usize).min(res.saturating_sub(1)) as u32
    };

    let mut by_cell: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for (v, uv) in uvs.iter().enumerate() {
        let cu = index(uv[0], nu) / patch_size as u32;
        let cv = index(uv[1], nv) / patch_size as u32;
        by_cell.entry((cv, cu)).or_default().push(v as u32);
    }

    let mut members = Vec::with_capacity(by_cell.len());
    let mut cells = Vec::with_capacity(by_cell.len());
    let mut cell_id = BTreeMap::new();
    let mut vertex_patch = alloc::vec![0u32; n];
    for (p, ((cv, cu), m)) in by_cell.into_iter().enumerate() {
        for &v in &m {
            vertex_patch[v as usize] = p as u32;
        }
        cell_id.insert((cu, cv), p as u32);
        cells.push((cu, cv));
        members.push(m);
    }

    let mut pairs = Vec::new();
    for (&(cu, cv), &p) in &cell_id {
        for nb in [(cu + 1, cv), (cu, cv + 1)] {
            if let Some(&q) = cell_id.get(&nb) {
                pairs.push((p, q));
                pairs.push((q, p));
            }
        }
    }
    Ok(PatchMap {
        members,
        vertex_patch,
        cells,
        mesh_edges: EdgeSet::from_pairs(pairs, EdgeKind::Mesh),
    })
}

/// Patch positions, velocities and accelerations (member means).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStates {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub accelerations: Vec<Vec3>,
}

pub fn patch_states(state: &super::MeshState, map: &PatchMap) -> Result<PatchStates> {
    map.validate(state.positions.len())?;
    Ok(PatchStates {
        positions: map.average(&state.positions),
        velocities: map.average(&state.velocities),
        accelerations: map.average(&state.accelerations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MeshState, Quaternion};
    use alloc::sync::Arc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_topology(nx: usize, ny: usize) -> MeshTopology {
        let mut faces = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let v = (j * nx + i) as u32;
                let w = nx as u32;
                faces.push([v, v + 1, v + w + 1]);
                faces.push([v, v + w + 1, v + w]);
            }
        }
        let uvs = (0..nx * ny)
            .map(|k| [(k % nx) as f64 / (nx - 1) as f64, (k / nx) as f64 / (ny - 1) as f64])
            .collect();
        MeshTopology::new(nx * ny, faces, Some(uvs)).unwrap()
    }

    #[test]
    fn four_by_four_into_two_by_two() {
        let pm = patchify(&grid_topology(4, 4), 2).unwrap();
        assert_eq!(pm.len(), 4);
        assert!(pm.members.iter().all(|m| m.len() == 4));
        assert_eq!(pm.members[0], alloc::vec![0, 1, 4, 5]);
        for p in 0..4 {
            assert_eq!(pm.mesh_edges.edges.iter().filter(|e| e.receiver == p).count(), 2);
        }
        pm.validate(16).unwrap();
    }

    #[test]
    fn eight_by_eight_into_four() {
        let pm = patchify(&grid_topology(8, 8), 4).unwrap();
        assert_eq!(pm.len(), 4);
        assert!(pm.members.iter().all(|m| m.len() == 16));
    }

    #[test]
    fn unit_patches_mirror_the_grid() {
        let topo = grid_topology(5, 3);
        let pm = patchify(&topo, 1).unwrap();
        assert_eq!(pm.len(), 15);
        // 4-neighborhood adjacency of a 5x3 grid: 2*(4*3 + 5*2) directed edges.
        assert_eq!(pm.mesh_edges.len(), 44);
        for (p, m) in pm.members.iter().enumerate() {
            assert_eq!(m, &alloc::vec![p as u32]);
        }
    }

    #[test]
    fn missing_uv_rejected() {
        let topo = MeshTopology::new(3, alloc::vec![[0, 1, 2]], None).unwrap();
        assert_eq!(patchify(&topo, 2), Err(Error::MissingUv));
    }

    #[test]
    fn midpoint_and_rigid_equivariance() {
        let topo = Arc::new(grid_topology(6, 6));
        let pm = patchify(&topo, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos: Vec<Vec3> = (0..36)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let centers = pm.average(&pos);
        // independent per-coordinate summation
        for (p, m) in pm.members.iter().enumerate() {
            let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
            for &v in m {
                sx += pos[v as usize].x;
                sy += pos[v as usize].y;
                sz += pos[v as usize].z;
            }
            let k = m.len() as f64;
            assert!((centers[p] - Vec3::new(sx / k, sy / k, sz / k)).norm() < 1e-12);
        }
        let r = crate::geometry::quat_to_matrix(Quaternion::random(&mut rng)).unwrap();
        let shift = Vec3::new(0.3, -2.0, 5.0);
        let moved: Vec<Vec3> = pos.iter().map(|&p| r.apply(p) + shift).collect();
        let state = MeshState::at_rest(topo.clone(), moved, 0.1).unwrap();
        let ps = patch_states(&state, &pm).unwrap();
        for (a, b) in ps.positions.iter().zip(&centers) {
            assert!((*a - (r.apply(*b) + shift)).norm() < 1e-9);
        }
    }

    #[test]
    fn two_point_midpoint() {
        let topo = MeshTopology::new(2, alloc::vec![], Some(alloc::vec![[0.0, 0.0], [1.0, 0.0]])).unwrap();
        let pm = patchify(&topo, 2).unwrap();
        let c = pm.average(&[Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(c, alloc::vec![Vec3::new(1.0, 0.0, 0.0)]);
    }
}
