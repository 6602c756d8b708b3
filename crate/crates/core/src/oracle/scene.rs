//! Scene description and deterministic sequence generation.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloth::{build_cloth_grid, StiffnessScale};
use super::collider::{BodyCollider, BodyMotion, Capsule};
use super::step::{step_oracle, BodyStep, ClothLayer, StepOptions};
use super::wind::WindState;
use crate::error::{Error, Result};
use crate::geometry::{GarmentAttributes, Quaternion, Vec3};
use crate::sequence::{Frame, GarmentLayer, Sequence};

/// Positions beyond this magnitude count as a diverged simulation.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub nx: usize,
    pub ny: usize,
    /// Rest edge length in meters.
    pub spacing: f64,
    /// Height of the flat layer above the origin at frame 0.
    pub height: f64,
    pub attrs: GarmentAttributes,
}

impl LayerConfig {
    pub fn half_extent(&self) -> (f64, f64) {
        (
            0.5 * (self.nx - 1) as f64 * self.spacing,
            0.5 * (self.ny - 1) as f64 * self.spacing,
        )
    }

    pub fn rest_diagonal(&self) -> f64 {
        let (hx, hy) = self.half_extent();
        2.0 * crate::math::sqrt(hx * hx + hy * hy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindInterval {
    /// First frame with this wind.
    pub start: usize,
    /// One past the last frame.
    pub end: usize,
    pub wind: WindState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    /// Fixed intervals, used as given.
    pub intervals: Vec<WindInterval>,
    /// Additional intervals drawn from the seed when `intervals` is empty.
    pub random_intervals: usize,
    /// Upper bound of the uniformly sampled strength, simulator units.
    pub max_strength: f64,
    pub min_frames: usize,
    pub max_frames: usize,
}

impl Default for WindConfig {
    fn default() -> Self {
        Self {
            intervals: Vec::new(),
            random_intervals: 1,
            // 0..400 on the dataset scale.
            max_strength: 4.0,
            min_frames: 10,
            max_frames: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Inner layer first.
    pub layers: Vec<LayerConfig>,
    pub stiffness: StiffnessScale,
    /// Frame interval, seconds.
    pub dt: f64,
    pub substeps: usize,
    pub frames: usize,
    pub gravity: Vec3,
    /// kg/s
    pub damping: f64,
    pub wind: WindConfig,
    pub body: Option<BodyCollider>,
    /// Draw the body's oscillation direction and phase from the seed.
    pub randomize_motion: bool,
    pub body_samples: usize,
    /// Contact thickness as a fraction of the cloth size.
    pub thickness_ratio: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let attrs = |layer, mass, stretch, bend, friction| GarmentAttributes {
            mass_density: mass,
            bend_stiffness: bend,
            stretch_stiffness: stretch,
            friction,
            layer,
        };
        Self {
            layers: alloc::vec![
                LayerConfig {
                    nx: 8,
                    ny: 8,
                    spacing: 0.08,
                    height: 0.31,
                    attrs: attrs(0, 0.4, 0.6, 0.5, 0.8),
                },
                LayerConfig {
                    nx: 8,
                    ny: 8,
                    spacing: 0.09,
                    height: 0.325,
                    attrs: attrs(1, 0.6, 0.8, 0.7, 0.7),
                },
            ],
            stiffness: StiffnessScale::default(),
            dt: 1.0 / 30.0,
            substeps: 20,
            frames: 50,
            gravity: Vec3::new(0.0, 0.0, -9.8),
            damping: 0.01,
            wind: WindConfig::default(),
            body: Some(BodyCollider {
                capsules: alloc::vec![Capsule::sphere(Vec3::ZERO, 0.3)],
                motion: BodyMotion {
                    amplitude: Vec3::new(0.08, 0.0, 0.0),
                    frequency: 0.6,
                    ..BodyMotion::default()
                },
            }),
            randomize_motion: true,
            body_samples: 400,
            thickness_ratio: 0.004,
            patch_size: 4,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Two 4x4 layers (one patch each) over a sphere with four body samples.
    pub fn tiny() -> Self {
        let mut cfg = Self::default();
        for layer in &mut cfg.layers {
            layer.nx = 4;
            layer.ny = 4;
        }
        cfg.layers[0].height = 0.31;
        cfg.layers[1].height = 0.33;
        cfg.body_samples = 4;
        cfg.frames = 8;
        cfg
    }

    /// Largest rest extent over the layers.
    pub fn cloth_size(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| (l.nx.max(l.ny) - 1) as f64 * l.spacing)
            .fold(0.0, f64::max)
    }

    pub fn thickness(&self) -> f64 {
        self.thickness_ratio * self.cloth_size()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.substeps == 0 || self.frames == 0 {
            return bad("substeps and frames must be at least 1");
        }
        if self.layers.is_empty() || self.layers.len() > 2 {
            return bad("one or two garment layers are supported");
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.nx < 2 || l.ny < 2 || !(l.spacing > 0.0) {
                return bad("layer grids need nx, ny >= 2 and positive spacing");
            }
            l.attrs.validate()?;
            if l.attrs.layer as usize != i {
                return bad("layer attribute index must match its position");
            }
        }
        if let [inner, outer] = self.layers.as_slice() {
            let (ix, iy) = inner.half_extent();
            let (ox, oy) = outer.half_extent();
            if !(ix < ox && iy < oy && inner.height < outer.height) {
                return bad("inner layer must lie strictly inside the outer layer at rest");
            }
        }
        if !(self.thickness_ratio > 0.0) || self.patch_size == 0 {
            return bad("thickness_ratio and patch_size must be positive");
        }
        let mut iv: Vec<_> = self.wind.intervals.iter().map(|w| (w.start, w.end)).collect();
        iv.sort();
        for w in &self.wind.intervals {
            w.wind.validate()?;
            if w.start >= w.end {
                return bad("wind interval must be non-empty");
            }
        }
        if iv.windows(2).any(|p| p[1].0 < p[0].1) {
            return bad("wind intervals overlap");
        }
        if !(self.wind.max_strength >= 0.0) || self.wind.min_frames > self.wind.max_frames {
            return bad("invalid random wind settings");
        }
        if let Some(b) = &self.body {
            if b.capsules.iter().any(|c| !(c.radius > 0.0)) {
                return bad("capsule radius must be positive");
            }
        }
        Ok(())
    }

    /// Wind intervals used for generation: the configured ones, or disjoint
    /// random ones when none are configured.
    fn wind_schedule(&self, rng: &mut ChaCha8Rng) -> Vec<WindInterval> {
        if !self.wind.intervals.is_empty() || self.wind.random_intervals == 0 || self.frames < 2 {
            return self.wind.intervals.clone();
        }
        let count = self.wind.random_intervals;
        let slot = self.frames / count;
        let mut out = Vec::new();
        for k in 0..count {
            let len = rng
                .gen_range(self.wind.min_frames..=self.wind.max_frames)
                .clamp(1, slot.max(1));
            let start = k * slot + rng.gen_range(0..=slot.saturating_sub(len));
            let end = (start + len).min(self.frames);
            let strength = rng.gen::<f64>() * self.wind.max_strength;
            let wind = WindState {
                quaternion: Quaternion::random(rng),
                strength,
            };
            if start < end {
                out.push(WindInterval { start, end, wind });
            }
        }
        out
    }
}

fn wind_at(schedule: &[WindInterval], frame: usize) -> WindState {
    schedule
        .iter()
        .find(|w| (w.start..w.end).contains(&frame))
        .map_or(WindState::CALM, |w| w.wind)
}

/// Builds the oracle layers at rest, centered over the origin.
pub fn initial_layers(config: &SceneConfig) -> Vec<ClothLayer> {
    config
        .layers
        .iter()
        .map(|lc| {
            let grid = build_cloth_grid(lc.nx, lc.ny, lc.spacing, &lc.attrs, &config.stiffness);
            let (hx, hy) = lc.half_extent();
            let offset = Vec3::new(-hx, -hy, lc.height);
            let n = grid.rest_positions.len();
            let area = 4.0 * hx * hy;
            let density = 0.2 + 0.6 * lc.attrs.mass_density;
            ClothLayer {
                topology: grid.topology,
                springs: grid.springs,
                attrs: lc.attrs,
                vertex_mass: density * area / n as f64,
                positions: grid.rest_positions.iter().map(|&p| p + offset).collect(),
                velocities: alloc::vec![Vec3::ZERO; n],
                accelerations: alloc::vec![Vec3::ZERO; n],
            }
        })
        .collect()
}

impl SceneConfig {
    pub fn step_options(&self) -> StepOptions {
        let inner_spacing = self.layers.first().map_or(0.1, |l| l.spacing);
        StepOptions {
            gravity: self.gravity,
            damping: self.damping,
            body_thickness: self.thickness(),
            layer_thickness: self.thickness(),
            layer_search_radius: inner_spacing,
            collisions: true,
        }
    }
}

/// Simulates the scene and records every frame. Deterministic in the seed.
pub fn generate_sequence(config: &SceneConfig) -> Result<Sequence> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = config.wind_schedule(&mut rng);
    let mut body = config.body.clone();
    if let (Some(b), true) = (body.as_mut(), config.randomize_motion) {
        let heading = rng.gen::<f64>() * core::f64::consts::TAU;
        let amp = b.motion.amplitude.norm();
        b.motion.amplitude = Vec3::new(crate::math::cos(heading), crate::math::sin(heading), 0.0) * amp;
        b.motion.phase = rng.gen::<f64>() * core::f64::consts::TAU;
    }
    let local_samples = body.as_ref().map(|b| b.sample_local(config.body_samples));

    let mut layers = initial_layers(config);
    let opts = config.step_options();
    let sub_dt = config.dt / config.substeps as f64;

    let record = |layers: &[ClothLayer], frame: usize| -> Frame {
        let (body_positions, body_normals) = match (&body, &local_samples) {
            (Some(b), Some(s)) => {
                let surf = b.sample_at(s, &b.motion.pose(frame as f64 * config.dt));
                (surf.positions, surf.normals)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Frame {
            garments: layers.iter().map(|l| l.positions.clone()).collect(),
            body_positions,
            body_normals,
            wind: wind_at(&schedule, frame),
        }
    };

    let mut frames = Vec::with_capacity(config.frames);
    frames.push(record(&layers, 0));
    for frame in 1..config.frames {
        let wind = wind_at(&schedule, frame);
        for s in 0..config.substeps {
            let t0 = ((frame - 1) * config.substeps + s) as f64 * sub_dt;
            let body_step = body.as_ref().map(|b| BodyStep {
                collider: b,
                before: b.motion.pose(t0),
                after: b.motion.pose(t0 + sub_dt),
            });
            step_oracle(&mut layers, body_step.as_ref(), &wind, &opts, sub_dt)
                .map_err(|e| Error::NonFinite(format!("frame {frame}: {e}")))?;
        }
        let magnitude = layers
            .iter()
            .flat_map(|l| l.positions.iter())
            .map(|p| p.max_abs())
            .fold(0.0, f64::max);
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { frame, magnitude });
        }
        frames.push(record(&layers, frame));
    }

    Ok(Sequence {
        layers: layers
            .iter()
            .map(|l| GarmentLayer {
                topology: Arc::new(l.topology.clone()),
                attrs: l.attrs,
            })
            .collect(),
        patch_size: config.patch_size,
        dt: config.dt,
        gravity: config.gravity,
        collider: body,
        cloth_size: config.cloth_size(),
        seed: config.seed,
        frames,
    })
}
