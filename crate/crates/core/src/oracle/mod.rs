//! Classical two-layer cloth simulator used as the ground-truth generator.

mod cloth;
mod collider;
mod scene;
mod step;
mod wind;

pub use cloth::{build_cloth_grid, ClothGrid, Spring, SpringSet, StiffnessScale};
pub use collider::{collide_body, BodyCollider, BodyMotion, BodySurface, Capsule, Pose};
pub use scene::{
    generate_sequence, initial_layers, LayerConfig, SceneConfig, WindConfig, WindInterval, DIVERGENCE_LIMIT,
};
pub use step::{collide_layers, step_oracle, BodyStep, ClothLayer, StepOptions};
pub use wind::{wind_force, WindState};
