use alloc::vec::Vec;

use super::{MeshTopology, Vec3};

/// Per-vertex normals and the indices of vertices whose incident faces have
/// zero total area (those get `(0, 0, 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    pub degenerate: Vec<usize>,
}

/// Area-weighted vertex normals. Face winding is taken as counter-clockwise.
pub fn vertex_normals(topology: &MeshTopology, positions: &[Vec3]) -> VertexNormals {
    let mut acc = alloc::vec![Vec3::ZERO; topology.vertex_count];
    for f in &topology.faces {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        // |cross| is twice the face area, so the sum is area weighted.
        let n = (b - a).cross(c - a);
        for &i in f {
            acc[i as usize] += n;
        }
    }
    let mut degenerate = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            n.try_normalize().unwrap_or_else(|| {
                degenerate.push(i);
                Vec3::Z
            })
        })
        .collect();
    VertexNormals { normals, degenerate }
}

/// Lumped vertex areas: a third of each incident face's area.
pub fn vertex_areas(topology: &MeshTopology, positions: &[Vec3]) -> Vec<f64> {
    let mut areas = alloc::vec![0.0; topology.vertex_count];
    for f in &topology.faces {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        let area = 0.5 * (b - a).cross(c - a).norm();
        for &i in f {
            areas[i as usize] += area / 3.0;
        }
    }
    areas
}
