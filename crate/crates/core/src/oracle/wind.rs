use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quat_to_matrix, Quaternion, Vec3};

/// Spatially uniform wind: orientation of the flow direction and its strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindState {
    pub quaternion: Quaternion,
    pub strength: f64,
}

impl WindState {
    pub const CALM: WindState = WindState {
        quaternion: Quaternion::IDENTITY,
        strength: 0.0,
    };

    pub fn new(quaternion: Quaternion, strength: f64) -> Result<Self> {
        let w = Self { quaternion, strength };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.quaternion.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitQuaternion(n));
        }
        if !(self.strength >= 0.0) || !self.strength.is_finite() {
            return Err(Error::InvalidConfig("wind strength must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Flow direction: the rotated local z axis.
    pub fn direction(&self) -> Vec3 {
        quat_to_matrix(self.quaternion)
            .map(|r| r.apply(Vec3::Z))
            .unwrap_or(Vec3::Z)
    }

    /// Quaternion `(w, x, y, z)` followed by the strength.
    pub fn to_array(&self) -> [f64; 5] {
        let q = self.quaternion;
        [q.w, q.x, q.y, q.z, self.strength]
    }
}

/// `strength * area_i * max(0, n_i . d) * d` per vertex.
pub fn wind_force(wind: &WindState, normals: &[Vec3], areas: &[f64]) -> Vec<Vec3> {
    if wind.strength == 0.0 {
        return alloc::vec![Vec3::ZERO; normals.len()];
    }
    let d = wind.direction();
    normals
        .iter()
        .zip(areas)
        .map(|(n, &a)| d * (wind.strength * a * n.dot(d).max(0.0)))
        .collect()
}
