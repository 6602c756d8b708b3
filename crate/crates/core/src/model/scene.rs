//! Static per-garment data and per-step inputs.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{patchify, EdgeKind, EdgeSet, PatchMap, Vec3};
use crate::oracle::WindState;
use crate::sequence::{GarmentLayer, Sequence};

use super::SimulatorConfig;

/// Everything about a garment set that does not change between frames.
#[derive(Debug, Clone)]
pub struct GarmentSetup {
    pub layers: Vec<GarmentLayer>,
    pub patch_maps: Vec<PatchMap>,
    /// First global vertex index of each layer, plus the total.
    pub vertex_offsets: Vec<usize>,
    /// First global patch index of each layer, plus the total.
    pub patch_offsets: Vec<usize>,
    /// Global patch of each global vertex.
    pub vertex_patch: Vec<u32>,
    /// UV-adjacent patch pairs in global indices, both directions.
    pub mesh_edges: EdgeSet,
    /// Largest member-to-member distance of a patch at rest.
    pub patch_diameter: f64,
    pub patch_radius: f64,
    pub body_radius: f64,
    /// Decoder pairs: global vertex and one of its neighbor patches.
    pub pair_vertex: Vec<u32>,
    pub pair_patch: Vec<u32>,
    /// `1 / |neighbor patches|` per vertex.
    pub inv_neighbor_count: Vec<f64>,
    pub dt: f64,
    pub gravity: Vec3,
    pub history: usize,
}

impl GarmentSetup {
    /// Builds the setup from a sequence; world-edge radii scale with the
    /// largest patch diameter in the first frame.
    pub fn new(seq: &Sequence, config: &SimulatorConfig) -> Result<Self> {
        config.validate()?;
        if seq.is_empty() {
            return Err(Error::InvalidConfig("sequence has no frames".into()));
        }
        let mut patch_maps = Vec::new();
        let (mut vertex_offsets, mut patch_offsets) = (alloc::vec![0], alloc::vec![0]);
        let mut vertex_patch = Vec::new();
        let mut mesh_pairs = Vec::new();
        let mut diameter: f64 = 0.0;
        for (li, layer) in seq.layers.iter().enumerate() {
            let map = patchify(&layer.topology, config.patch_size)?;
            let (v0, p0) = (vertex_offsets[li], patch_offsets[li] as u32);
            vertex_patch.extend(map.vertex_patch.iter().map(|p| p + p0));
            mesh_pairs.extend(map.mesh_edges.pairs().map(|(a, b)| (a + p0, b + p0)));
            let rest = &seq.frames[0].garments[li];
            for members in &map.members {
                for &a in members {
                    for &b in members {
                        diameter = diameter.max(rest[a as usize].distance(rest[b as usize]));
                    }
                }
            }
            vertex_offsets.push(v0 + layer.topology.vertex_count);
            patch_offsets.push(patch_offsets[li] + map.len());
            patch_maps.push(map);
        }
        if !(diameter > 0.0) {
            // Single-vertex patches: fall back to the cloth size.
            diameter = seq.cloth_size.max(1e-3) / 4.0;
        }
        let (mut pair_vertex, mut pair_patch, mut inv_neighbor_count) = (Vec::new(), Vec::new(), Vec::new());
        for (li, map) in patch_maps.iter().enumerate() {
            let (v0, p0) = (vertex_offsets[li], patch_offsets[li] as u32);
            for v in 0..map.vertex_patch.len() {
                let nbrs = map.neighbor_patches(v);
                inv_neighbor_count.push(1.0 / nbrs.len() as f64);
                for p in nbrs {
                    pair_vertex.push((v0 + v) as u32);
                    pair_patch.push(p + p0);
                }
            }
        }
        Ok(Self {
            layers: seq.layers.clone(),
            patch_maps,
            vertex_offsets,
            patch_offsets,
            vertex_patch,
            mesh_edges: EdgeSet::from_pairs(mesh_pairs, EdgeKind::Mesh),
            patch_diameter: diameter,
            patch_radius: config.patch_radius_scale * diameter,
            body_radius: config.body_radius_scale * diameter,
            pair_vertex,
            pair_patch,
            inv_neighbor_count,
            dt: seq.dt,
            gravity: seq.gravity,
            history: config.history,
        })
    }

    pub fn vertex_count(&self) -> usize {
        *self.vertex_offsets.last().unwrap()
    }

    pub fn patch_count(&self) -> usize {
        *self.patch_offsets.last().unwrap()
    }

    /// Vertices of layer `li` within a global array.
    pub fn layer_slice<'a, T>(&self, li: usize, all: &'a [T]) -> &'a [T] {
        &all[self.vertex_offsets[li]..self.vertex_offsets[li + 1]]
    }

    /// Patch centers of a global position array.
    pub fn patch_centers(&self, positions: &[Vec3]) -> Vec<Vec3> {
        let mut sum = alloc::vec![Vec3::ZERO; self.patch_count()];
        let mut count = alloc::vec![0usize; self.patch_count()];
        for (p, &k) in positions.iter().zip(&self.vertex_patch) {
            sum[k as usize] += *p;
            count[k as usize] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| *s / c.max(1) as f64).collect()
    }

    /// Ground-truth garment positions of every frame, layers concatenated.
    pub fn garment_track(&self, seq: &Sequence) -> Vec<Vec<Vec3>> {
        seq.frames.iter().map(|f| f.garments.concat()).collect()
    }
}

/// Inputs to one prediction from frame `t` to `t + 1`.
#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    /// Garment positions at `t, t-1, ..., t-h-1`, layers concatenated.
    pub garments: Vec<&'a [Vec3]>,
    /// Body samples at `t+1, t, ..., t-h`.
    pub body: Vec<&'a [Vec3]>,
    /// Body sample normals at `t+1`.
    pub body_normals: &'a [Vec3],
    /// Wind at `t+1`.
    pub wind: WindState,
}

impl<'a> StepInput<'a> {
    /// Window ending at frame `t` of `track`; frames before the start repeat frame 0.
    pub fn from_track(track: &'a [Vec<Vec3>], seq: &'a Sequence, t: usize, history: usize) -> Result<Self> {
        if t + 1 >= seq.len() || t >= track.len() {
            return Err(Error::MissingHistory {
                needed: t + 2,
                available: seq.len().min(track.len() + 1),
            });
        }
        let back = |k: usize| t.saturating_sub(k);
        Ok(Self {
            garments: (0..history + 2).map(|k| track[back(k)].as_slice()).collect(),
            body: (0..history + 2)
                .map(|k| seq.frames[(t + 1).saturating_sub(k)].body_positions.as_slice())
                .collect(),
            body_normals: &seq.frames[t + 1].body_normals,
            wind: seq.frames[t + 1].wind,
        })
    }

    pub fn current(&self) -> &'a [Vec3] {
        self.garments[0]
    }

    pub fn body_now(&self) -> &'a [Vec3] {
        self.body[1]
    }
}
