use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Number of previous states fed to the model.
    pub history: usize,
    /// Attention layers.
    pub layers: usize,
    /// Hidden width.
    pub hidden: usize,
    /// Patch edge length in vertices.
    pub patch_size: usize,
    /// Patch-patch world-edge radius, in multiples of the rest patch diameter.
    pub patch_radius_scale: f64,
    /// Patch-body world-edge radius, in multiples of the rest patch diameter.
    pub body_radius_scale: f64,
    /// Multiplier on the decoder output, m/s^2.
    pub accel_scale: f64,
    /// Rotation lifting on body, wind and gravity interactions and in the
    /// decoder. `false` gives the ablation with every frame set to identity.
    pub rotation_equivalent: bool,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SimulatorConfig {
    /// Small model used for CPU experiments.
    pub fn desk() -> Self {
        Self {
            history: 1,
            layers: 2,
            hidden: 32,
            patch_size: 4,
            patch_radius_scale: 2.5,
            body_radius_scale: 0.5,
            accel_scale: 10.0,
            rotation_equivalent: true,
            seed: 0,
        }
    }

    /// Full-size width and depth.
    pub fn full() -> Self {
        Self {
            layers: 4,
            hidden: 128,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history < 1 || self.layers < 1 {
            return Err(Error::InvalidConfig("history and layers must be at least 1".into()));
        }
        if self.hidden < 3 {
            return Err(Error::InvalidConfig("hidden width must be at least 3".into()));
        }
        if self.patch_size == 0 || !(self.patch_radius_scale > 0.0) || !(self.body_radius_scale > 0.0) {
            return Err(Error::InvalidConfig("patch size and radii must be positive".into()));
        }
        Ok(())
    }

    /// Patch token feature length: velocity history, normal, attributes.
    pub fn patch_feature_len(&self) -> usize {
        3 * (self.history + 1) + 3 + crate::geometry::GarmentAttributes::FEATURE_LEN
    }

    /// Body token feature length: surface velocity history and normal.
    pub fn body_feature_len(&self) -> usize {
        3 * (self.history + 1) + 3
    }
}
