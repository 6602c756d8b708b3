//! In-memory animation sequence: garment tracks, body samples and wind.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{patchify, GarmentAttributes, MeshState, MeshTopology, PatchMap, Vec3};
use crate::oracle::{BodyCollider, WindState};

/// Wind strengths are stored in simulator units; one unit corresponds to
/// 100 units on the 0..400 strength scale of the reference dataset.
pub const WIND_UNIT_SCALE: f64 = 100.0;

/// Sequences whose peak wind (in dataset units) stays below this are "not windy".
pub const DEFAULT_WINDY_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GarmentLayer {
    pub topology: Arc<MeshTopology>,
    pub attrs: GarmentAttributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// One position list per layer, inner layer first.
    pub garments: Vec<Vec<Vec3>>,
    pub body_positions: Vec<Vec3>,
    pub body_normals: Vec<Vec3>,
    pub wind: WindState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub layers: Vec<GarmentLayer>,
    pub patch_size: usize,
    pub dt: f64,
    pub gravity: Vec3,
    pub collider: Option<BodyCollider>,
    /// Largest rest extent of any layer, in meters.
    pub cloth_size: f64,
    pub seed: u64,
    pub frames: Vec<Frame>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn vertex_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.topology.vertex_count).collect()
    }

    pub fn body_sample_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.body_positions.len())
    }

    pub fn patch_maps(&self) -> Result<Vec<PatchMap>> {
        self.layers
            .iter()
            .map(|l| patchify(&l.topology, self.patch_size))
            .collect()
    }

    /// Kinematic state of `layer` at frame `t` (finite differences; frames
    /// before the first are at rest).
    pub fn mesh_state(&self, layer: usize, t: usize) -> Result<MeshState> {
        let track: Vec<&[Vec3]> = self.frames.iter().map(|f| f.garments[layer].as_slice()).collect();
        MeshState::from_track(self.layers[layer].topology.clone(), &track, t, self.dt)
    }

    /// Peak wind strength in dataset units.
    pub fn peak_wind(&self) -> f64 {
        self.frames
            .iter()
            .map(|f| f.wind.strength * WIND_UNIT_SCALE)
            .fold(0.0, f64::max)
    }

    pub fn is_windy(&self, threshold: f64) -> bool {
        self.peak_wind() >= threshold
    }

    /// Checks that every frame carries consistent array lengths.
    pub fn validate(&self) -> Result<()> {
        let counts = self.vertex_counts();
        let nb = self.body_sample_count();
        for f in &self.frames {
            if f.garments.len() != counts.len() {
                return Err(Error::LengthMismatch {
                    what: "garment layers",
                    expected: counts.len(),
                    got: f.garments.len(),
                });
            }
            for (g, &n) in f.garments.iter().zip(&counts) {
                if g.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "garment positions",
                        expected: n,
                        got: g.len(),
                    });
                }
            }
            if f.body_positions.len() != nb || f.body_normals.len() != nb {
                return Err(Error::LengthMismatch {
                    what: "body samples",
                    expected: nb,
                    got: f.body_positions.len().min(f.body_normals.len()),
                });
            }
        }
        Ok(())
    }
}
