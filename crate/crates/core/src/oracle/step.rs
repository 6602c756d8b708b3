//! Semi-implicit Euler stepping with projection-based collisions.

use alloc::format;
use alloc::vec::Vec;

use super::cloth::SpringSet;
use super::collider::{collide_body, BodyCollider, Pose};
use super::wind::{wind_force, WindState};
use crate::error::{Error, Result};
use crate::geometry::{vertex_areas, vertex_normals, GarmentAttributes, MeshTopology, SpatialHash, Vec3};

/// One garment layer inside the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothLayer {
    pub topology: MeshTopology,
    pub springs: SpringSet,
    pub attrs: GarmentAttributes,
    /// kg per vertex
    pub vertex_mass: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub accelerations: Vec<Vec3>,
}

impl ClothLayer {
    pub fn center_of_mass(&self) -> Vec3 {
        crate::geometry::mean(self.positions.iter().copied()).unwrap_or(Vec3::ZERO)
    }
}

/// Which parts of the step are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub gravity: Vec3,
    /// Linear drag in kg/s.
    pub damping: f64,
    pub body_thickness: f64,
    pub layer_thickness: f64,
    /// Radius of the inner-vertex search for layer contacts.
    pub layer_search_radius: f64,
    pub collisions: bool,
}

/// Body placement for one step.
pub struct BodyStep<'a> {
    pub collider: &'a BodyCollider,
    pub before: Pose,
    pub after: Pose,
}

/// Advances all layers by `dt`.
///
/// Velocities take the force update first, positions then move with the new
/// velocity. Contacts are resolved by projection: body, inner/outer layer,
/// then body once more so that layer pushes never leave a vertex inside the body.
pub fn step_oracle(
    layers: &mut [ClothLayer],
    body: Option<&BodyStep<'_>>,
    wind: &WindState,
    opts: &StepOptions,
    dt: f64,
) -> Result<()> {
    for (li, layer) in layers.iter_mut().enumerate() {
        let n = layer.positions.len();
        let mut forces = alloc::vec![Vec3::ZERO; n];
        layer.springs.accumulate_forces(&layer.positions, &mut forces);
        if wind.strength != 0.0 {
            let normals = vertex_normals(&layer.topology, &layer.positions).normals;
            let areas = vertex_areas(&layer.topology, &layer.positions);
            for (f, w) in forces.iter_mut().zip(wind_force(wind, &normals, &areas)) {
                *f += w;
            }
        }
        let m = layer.vertex_mass;
        for i in 0..n {
            let f = forces[i] - layer.velocities[i] * opts.damping;
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("oracle force on layer {li} vertex {i}")));
            }
            let v_old = layer.velocities[i];
            let v = v_old + (f / m + opts.gravity) * dt;
            layer.velocities[i] = v;
            layer.positions[i] += v * dt;
            layer.accelerations[i] = v_old;
        }
    }
    if opts.collisions {
        if let Some(b) = body {
            resolve_body(layers, b, opts, dt);
        }
        if layers.len() >= 2 {
            let (inner, outer) = layers.split_at_mut(1);
            collide_layers(&mut inner[0], &mut outer[0], opts.layer_thickness, opts.layer_search_radius);
        }
        if let Some(b) = body {
            resolve_body(layers, b, opts, dt);
        }
    }
    for layer in layers.iter_mut() {
        for (a, v) in layer.accelerations.iter_mut().zip(&layer.velocities) {
            // `a` still holds the velocity before the step.
            *a = (*v - *a) / dt;
        }
    }
    Ok(())
}

fn resolve_body(layers: &mut [ClothLayer], b: &BodyStep<'_>, opts: &StepOptions, dt: f64) {
    for layer in layers.iter_mut() {
        collide_body(
            &mut layer.positions,
            &mut layer.velocities,
            b.collider,
            &b.before,
            &b.after,
            opts.body_thickness,
            layer.attrs.friction,
            dt,
        );
    }
}

/// Keeps the outer layer at least `thickness` in front of the inner surface.
///
/// Each outer vertex is tested against its nearest inner vertex within
/// `search_radius`; when the offset along that vertex's normal is below
/// `thickness` (and not further behind than `search_radius`), both are moved
/// apart along the normal in inverse proportion to their masses so the
/// separation becomes exactly `thickness`. Approaching normal velocity is
/// removed with a momentum-conserving impulse, together with Coulomb friction
/// on the relative tangential velocity (mean of the two layers' coefficients).
/// Returns the number of contacts.
pub fn collide_layers(inner: &mut ClothLayer, outer: &mut ClothLayer, thickness: f64, search_radius: f64) -> usize {
    assert!(thickness > 0.0, "layer thickness must be positive");
    let radius = search_radius.max(thickness);
    let normals = vertex_normals(&inner.topology, &inner.positions).normals;
    let snapshot = inner.positions.clone();
    let grid = SpatialHash::new(&snapshot, radius);
    let (mi, mo) = (inner.vertex_mass, outer.vertex_mass);
    let (wi, wo) = (mo / (mi + mo), mi / (mi + mo));
    let friction = 0.5 * (inner.attrs.friction + outer.attrs.friction);
    let mut contacts = 0;
    for k in 0..outer.positions.len() {
        let Some((j, _)) = grid.nearest_within(outer.positions[k], radius) else {
            continue;
        };
        let j = j as usize;
        let n = normals[j];
        let gap = (outer.positions[k] - inner.positions[j]).dot(n);
        if gap >= thickness || gap < -radius {
            continue;
        }
        let push = thickness - gap;
        outer.positions[k] += n * (push * wo);
        inner.positions[j] -= n * (push * wi);
        let rel_v = outer.velocities[k] - inner.velocities[j];
        let rel = rel_v.dot(n);
        if rel < 0.0 {
            let mut dv = n * (-rel);
            let tangential = rel_v - n * rel;
            let vt = tangential.norm();
            if vt > 0.0 {
                dv -= tangential * (friction * (-rel) / vt).min(1.0);
            }
            outer.velocities[k] += dv * wo;
            inner.velocities[j] -= dv * wi;
        }
        contacts += 1;
    }
    contacts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::cloth::{build_cloth_grid, Spring, StiffnessScale};

    fn attrs(layer: u8) -> GarmentAttributes {
        GarmentAttributes {
            mass_density: 0.5,
            bend_stiffness: 0.5,
            stretch_stiffness: 0.5,
            friction: 0.3,
            layer,
        }
    }

    fn free_opts() -> StepOptions {
        StepOptions {
            gravity: Vec3::new(0.0, 0.0, -9.8),
            damping: 0.0,
            body_thickness: 0.01,
            layer_thickness: 0.01,
            layer_search_radius: 0.1,
            collisions: false,
        }
    }

    fn layer_from_grid(nx: usize, spacing: f64, z: f64, layer: u8) -> ClothLayer {
        let g = build_cloth_grid(nx, nx, spacing, &attrs(layer), &StiffnessScale::default());
        let n = g.rest_positions.len();
        ClothLayer {
            topology: g.topology,
            springs: g.springs,
            attrs: attrs(layer),
            vertex_mass: 0.01,
            positions: g.rest_positions.iter().map(|p| *p + Vec3::new(0.0, 0.0, z)).collect(),
            velocities: alloc::vec![Vec3::ZERO; n],
            accelerations: alloc::vec![Vec3::ZERO; n],
        }
    }

    #[test]
    fn single_free_vertex_step() {
        let mut layers = [ClothLayer {
            topology: MeshTopology::new(1, alloc::vec![], None).unwrap(),
            springs: SpringSet::default(),
            attrs: attrs(0),
            vertex_mass: 1.0,
            positions: alloc::vec![Vec3::new(1.0, 2.0, 3.0)],
            velocities: alloc::vec![Vec3::ZERO],
            accelerations: alloc::vec![Vec3::ZERO],
        }];
        step_oracle(&mut layers, None, &WindState::CALM, &free_opts(), 0.1).unwrap();
        assert!((layers[0].velocities[0] - Vec3::new(0.0, 0.0, -0.98)).norm() < 1e-15);
        assert!((layers[0].positions[0] - Vec3::new(1.0, 2.0, 3.0 - 0.098)).norm() < 1e-15);
        assert!((layers[0].accelerations[0] - Vec3::new(0.0, 0.0, -9.8)).norm() < 1e-12);
    }

    #[test]
    fn spring_at_rest_falls_uniformly() {
        let mut layers = [ClothLayer {
            topology: MeshTopology::new(2, alloc::vec![], None).unwrap(),
            springs: SpringSet {
                structural: alloc::vec![Spring { i: 0, j: 1, rest_length: 1.0, stiffness: 50.0 }],
                ..Default::default()
            },
            attrs: attrs(0),
            vertex_mass: 0.5,
            positions: alloc::vec![Vec3::ZERO, Vec3::X],
            velocities: alloc::vec![Vec3::ZERO; 2],
            accelerations: alloc::vec![Vec3::ZERO; 2],
        }];
        for _ in 0..10 {
            step_oracle(&mut layers, None, &WindState::CALM, &free_opts(), 0.05).unwrap();
        }
        let l = &layers[0];
        assert_eq!(l.velocities[0], l.velocities[1]);
        assert!((l.positions[1] - l.positions[0] - Vec3::X).norm() < 1e-12);
    }

    #[test]
    fn non_finite_force_aborts() {
        let mut layer = layer_from_grid(3, 0.1, 0.0, 0);
        layer.positions[4] = Vec3::new(f64::NAN, 0.0, 0.0);
        let err = step_oracle(core::slice::from_mut(&mut layer), None, &WindState::CALM, &free_opts(), 0.01);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn separated_layers_untouched() {
        let mut inner = layer_from_grid(4, 0.1, 0.0, 0);
        let mut outer = layer_from_grid(4, 0.1, 0.1, 1);
        let before = (inner.positions.clone(), outer.positions.clone());
        assert_eq!(collide_layers(&mut inner, &mut outer, 0.01, 0.05), 0);
        assert_eq!((inner.positions, outer.positions), before);
    }

    #[test]
    fn touching_layers_separate_to_thickness() {
        let mut inner = layer_from_grid(4, 0.1, 0.0, 0);
        let mut outer = layer_from_grid(4, 0.1, 0.0, 1);
        collide_layers(&mut inner, &mut outer, 0.01, 0.05);
        for (o, i) in outer.positions.iter().zip(&inner.positions) {
            assert!(((*o - *i).dot(Vec3::Z) - 0.01).abs() < 1e-12);
        }
    }
}
