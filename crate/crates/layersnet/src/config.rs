//! Run configuration shared by the commands.

use std::path::Path;

use layersnet_core::model::SimulatorConfig;
use layersnet_core::oracle::SceneConfig;
use layersnet_core::sequence::DEFAULT_WINDY_THRESHOLD;
use layersnet_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Peak wind, in dataset units, from which a sequence counts as windy.
    pub windy_threshold: f64,
    /// Frames predicted per sequence; `None` runs to the end.
    pub rollout_steps: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            windy_threshold: DEFAULT_WINDY_THRESHOLD,
            rollout_steps: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub model: SimulatorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.scene.validate()?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
