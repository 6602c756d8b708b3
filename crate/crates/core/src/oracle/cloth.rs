use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{GarmentAttributes, MeshTopology, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: u32,
    pub j: u32,
    pub rest_length: f64,
    /// N/m
    pub stiffness: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpringSet {
    pub structural: Vec<Spring>,
    pub shear: Vec<Spring>,
    pub bend: Vec<Spring>,
}

impl SpringSet {
    pub fn iter(&self) -> impl Iterator<Item = &Spring> {
        self.structural.iter().chain(&self.shear).chain(&self.bend)
    }

    pub fn len(&self) -> usize {
        self.structural.len() + self.shear.len() + self.bend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds each spring's force to `forces`; equal and opposite per pair.
    pub fn accumulate_forces(&self, positions: &[Vec3], forces: &mut [Vec3]) {
        for s in self.iter() {
            let (i, j) = (s.i as usize, s.j as usize);
            let d = positions[j] - positions[i];
            let len = d.norm();
            if len <= 1e-12 {
                continue;
            }
            let f = d * (s.stiffness * (len - s.rest_length) / len);
            forces[i] += f;
            forces[j] -= f;
        }
    }
}

/// Base stiffnesses in N/m before scaling by the layer attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StiffnessScale {
    pub stretch: f64,
    pub shear: f64,
    pub bend: f64,
}

impl Default for StiffnessScale {
    fn default() -> Self {
        Self {
            stretch: 300.0,
            shear: 120.0,
            bend: 30.0,
        }
    }
}

/// A planar cloth grid in the local xy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothGrid {
    pub topology: MeshTopology,
    pub rest_positions: Vec<Vec3>,
    pub springs: SpringSet,
}

/// `nx * ny` vertices on a regular grid with spacing `spacing`, row-major
/// (vertex `j * nx + i` sits at `(i, j) * spacing`). UVs are the normalized
/// grid coordinates. Structural springs follow grid edges, shear springs both
/// cell diagonals and bend springs connect vertices two apart along a row or
/// column.
pub fn build_cloth_grid(
    nx: usize,
    ny: usize,
    spacing: f64,
    attrs: &GarmentAttributes,
    scale: &StiffnessScale,
) -> ClothGrid {
    assert!(nx >= 2 && ny >= 2, "cloth grid needs at least 2x2 vertices");
    assert!(spacing > 0.0, "cloth spacing must be positive");
    let idx = |i: usize, j: usize| (j * nx + i) as u32;
    let mut rest_positions = Vec::with_capacity(nx * ny);
    let mut uvs = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            rest_positions.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            uvs.push([i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let topology = MeshTopology::new(nx * ny, faces, Some(uvs)).expect("grid indices in range");

    let k_stretch = scale.stretch * (0.2 + 0.8 * attrs.stretch_stiffness);
    let k_shear = scale.shear * (0.2 + 0.8 * attrs.stretch_stiffness);
    let k_bend = scale.bend * (0.2 + 0.8 * attrs.bend_stiffness);
    let spring = |a: u32, b: u32, k: f64| Spring {
        i: a,
        j: b,
        rest_length: rest_positions[a as usize].distance(rest_positions[b as usize]),
        stiffness: k,
    };

    let mut springs = SpringSet::default();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                springs.structural.push(spring(idx(i, j), idx(i + 1, j), k_stretch));
            }
            if j + 1 < ny {
                springs.structural.push(spring(idx(i, j), idx(i, j + 1), k_stretch));
            }
            if i + 1 < nx && j + 1 < ny {
                springs.shear.push(spring(idx(i, j), idx(i + 1, j + 1), k_shear));
                springs.shear.push(spring(idx(i + 1, j), idx(i, j + 1), k_shear));
            }
            if i + 2 < nx {
                springs.bend.push(spring(idx(i, j), idx(i + 2, j), k_bend));
            }
            if j + 2 < ny {
                springs.bend.push(spring(idx(i, j), idx(i, j + 2), k_bend));
            }
        }
    }
    ClothGrid {
        topology,
        rest_positions,
        springs,
    }
}
