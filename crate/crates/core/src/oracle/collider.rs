//! Rigid capsule bodies: signed distance, surface sampling and projection.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{quat_to_matrix, Quaternion, RotationMatrix, Vec3};
use crate::math;

/// Capsule with centerline `a..b`; `a == b` gives a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            a: center,
            b: center,
            radius,
        }
    }

    pub fn closest_on_axis(&self, p: Vec3) -> Vec3 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 <= 1e-300 {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len2).clamp(0.0, 1.0);
        self.a + ab * t
    }

    /// Signed distance and outward unit normal at the closest surface point.
    pub fn signed_distance(&self, p: Vec3) -> (f64, Vec3) {
        let c = self.closest_on_axis(p);
        let d = p - c;
        let len = d.norm();
        let normal = d.try_normalize().unwrap_or_else(|| {
            // On the axis: any direction perpendicular to it is outward.
            let ab = self.b - self.a;
            let helper = if ab.x.abs() < 0.9 * ab.norm() { Vec3::X } else { Vec3::Y };
            ab.cross(helper).try_normalize().unwrap_or(Vec3::Z)
        });
        (len - self.radius, normal)
    }

    fn area(&self) -> f64 {
        let h = (self.b - self.a).norm();
        core::f64::consts::TAU * self.radius * h + 2.0 * core::f64::consts::TAU * self.radius * self.radius
    }
}

/// Scripted rigid motion of the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyMotion {
    pub offset: Vec3,
    pub velocity: Vec3,
    pub amplitude: Vec3,
    /// Hz
    pub frequency: f64,
    pub phase: f64,
    pub spin_axis: Vec3,
    /// rad/s
    pub spin_rate: f64,
}

impl Default for BodyMotion {
    fn default() -> Self {
        Self {
            offset: Vec3::ZERO,
            velocity: Vec3::ZERO,
            amplitude: Vec3::ZERO,
            frequency: 0.0,
            phase: 0.0,
            spin_axis: Vec3::Z,
            spin_rate: 0.0,
        }
    }
}

/// Rigid placement of the body at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Quaternion,
}

impl Pose {
    pub fn matrix(&self) -> RotationMatrix {
        quat_to_matrix(self.rotation).expect("pose quaternion is unit length")
    }

    pub fn transform(&self, p: Vec3) -> Vec3 {
        self.matrix().apply(p) + self.translation
    }

    pub fn inverse_transform(&self, p: Vec3) -> Vec3 {
        self.matrix().apply_transpose(p - self.translation)
    }
}

impl BodyMotion {
    pub fn pose(&self, time: f64) -> Pose {
        let osc = math::sin(core::f64::consts::TAU * self.frequency * time + self.phase);
        Pose {
            translation: self.offset + self.velocity * time + self.amplitude * osc,
            rotation: Quaternion::from_axis_angle(self.spin_axis, self.spin_rate * time),
        }
    }
}

/// Union of capsules attached to one rigid frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyCollider {
    pub capsules: Vec<Capsule>,
    #[serde(default)]
    pub motion: BodyMotion,
}

/// Body surface samples at one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BodySurface {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl BodyCollider {
    /// Signed distance to the capsule union with the normal of the closest capsule,
    /// evaluated in the body's local frame.
    pub fn signed_distance_local(&self, p: Vec3) -> Option<(usize, f64, Vec3)> {
        self.capsules
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (d, n) = c.signed_distance(p);
                (k, d, n)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn signed_distance(&self, pose: &Pose, p: Vec3) -> Option<(f64, Vec3)> {
        let local = pose.inverse_transform(p);
        self.signed_distance_local(local)
            .map(|(_, d, n)| (d, pose.matrix().apply(n)))
    }

    /// `count` surface samples in the local frame, split across capsules by
    /// area. Spheres use a Fibonacci lattice; capsules a helical lattice on the
    /// cylinder plus Fibonacci hemispheres.
    pub fn sample_local(&self, count: usize) -> BodySurface {
        let total: f64 = self.capsules.iter().map(Capsule::area).sum();
        let mut out = BodySurface::default();
        let mut assigned = 0usize;
        for (k, c) in self.capsules.iter().enumerate() {
            let n = if k + 1 == self.capsules.len() {
                count - assigned
            } else {
                ((count as f64) * c.area() / total + 0.5) as usize
            }
            .min(count - assigned);
            assigned += n;
            sample_capsule(c, n, &mut out);
        }
        out
    }

    pub fn sample_at(&self, local: &BodySurface, pose: &Pose) -> BodySurface {
        let r = pose.matrix();
        BodySurface {
            positions: local.positions.iter().map(|&p| r.apply(p) + pose.translation).collect(),
            normals: local.normals.iter().map(|&n| r.apply(n)).collect(),
        }
    }
}

fn fibonacci_dir(i: usize, n: usize) -> Vec3 {
    let golden = core::f64::consts::PI * (3.0 - math::sqrt(5.0));
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let r = math::sqrt((1.0 - z * z).max(0.0));
    let th = golden * i as f64;
    Vec3::new(r * math::cos(th), r * math::sin(th), z)
}

fn sample_capsule(c: &Capsule, n: usize, out: &mut BodySurface) {
    if n == 0 {
        return;
    }
    let axis = c.b - c.a;
    let h = axis.norm();
    if h <= 1e-12 {
        for i in 0..n {
            let d = fibonacci_dir(i, n);
            out.positions.push(c.a + d * c.radius);
            out.normals.push(d);
        }
        return;
    }
    let w = axis / h;
    let helper = if w.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let u = w.cross(helper).try_normalize().expect("helper not parallel");
    let v = w.cross(u);
    let side = core::f64::consts::TAU * c.radius * h;
    let caps = 2.0 * core::f64::consts::TAU * c.radius * c.radius;
    let n_side = ((n as f64) * side / (side + caps) + 0.5) as usize;
    let n_caps = n - n_side.min(n);
    let golden = core::f64::consts::PI * (3.0 - math::sqrt(5.0));
    for i in 0..n_side.min(n) {
        let t = (i as f64 + 0.5) / n_side as f64;
        let th = golden * i as f64;
        let d = u * math::cos(th) + v * math::sin(th);
        out.positions.push(c.a + axis * t + d * c.radius);
        out.normals.push(d);
    }
    // Cap samples: the full Fibonacci sphere, hemisphere picked by the sign
    // along the axis.
    for i in 0..n_caps {
        let d0 = fibonacci_dir(i, n_caps);
        let d = u * d0.x + v * d0.y + w * d0.z;
        let center = if d0.z >= 0.0 { c.b } else { c.a };
        out.positions.push(center + d * c.radius);
        out.normals.push(d);
    }
}

/// Pushes points closer than `thickness` to the body out to `thickness`
/// along the body normal, removes inward velocity relative to the body
/// surface and applies Coulomb friction to the tangential part.
///
/// `before` and `after` are the body poses at the start and end of the step;
/// the surface velocity at a point is the rigid displacement between them over `dt`.
pub fn collide_body(
    positions: &mut [Vec3],
    velocities: &mut [Vec3],
    body: &BodyCollider,
    before: &Pose,
    after: &Pose,
    thickness: f64,
    friction: f64,
    dt: f64,
) -> usize {
    assert!(thickness > 0.0, "body thickness must be positive");
    let r_after = after.matrix();
    let mut corrected = 0;
    for (x, v) in positions.iter_mut().zip(velocities.iter_mut()) {
        // Overlapping capsules may push a point into a neighbor; repeat a few times.
        for _ in 0..4 {
            let local = after.inverse_transform(*x);
            let Some((k, d, n_local)) = body.signed_distance_local(local) else {
                break;
            };
            if d >= thickness {
                break;
            }
            let cap = &body.capsules[k];
            let target_local = cap.closest_on_axis(local) + n_local * (cap.radius + thickness);
            *x = r_after.apply(target_local) + after.translation;
            let n = r_after.apply(n_local);
            let surface_v = (*x - before.transform(after.inverse_transform(*x))) / dt;
            let mut rel = *v - surface_v;
            let vn = rel.dot(n);
            if vn < 0.0 {
                rel -= n * vn;
                let vt = rel.norm();
                if vt > 0.0 {
                    rel *= (1.0 - friction * (-vn) / vt).max(0.0);
                }
            }
            *v = surface_v + rel;
            corrected += 1;
        }
    }
    corrected
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn still() -> Pose {
        Pose {
            translation: Vec3::ZERO,
            rotation: Quaternion::IDENTITY,
        }
    }

    #[test]
    fn inside_unit_sphere_moves_radially() {
        let body = BodyCollider {
            capsules: alloc::vec![Capsule::sphere(Vec3::ZERO, 1.0)],
            motion: BodyMotion::default(),
        };
        let mut x = [Vec3::new(0.0, 0.0, 0.5)];
        let mut v = [Vec3::new(0.0, 0.0, -1.0)];
        collide_body(&mut x, &mut v, &body, &still(), &still(), 0.01, 0.0, 0.1);
        assert!((x[0] - Vec3::new(0.0, 0.0, 1.01)).norm() < 1e-12);
        assert!(v[0].z.abs() < 1e-12);
    }

    #[test]
    fn outside_points_untouched() {
        let body = BodyCollider {
            capsules: alloc::vec![Capsule::sphere(Vec3::ZERO, 1.0)],
            motion: BodyMotion::default(),
        };
        let mut x = [Vec3::new(0.0, 3.0, 0.0)];
        let mut v = [Vec3::new(0.3, 0.0, -1.0)];
        assert_eq!(collide_body(&mut x, &mut v, &body, &still(), &still(), 0.01, 0.5, 0.1), 0);
        assert_eq!(x[0], Vec3::new(0.0, 3.0, 0.0));
        assert_eq!(v[0], Vec3::new(0.3, 0.0, -1.0));
    }

    #[test]
    fn random_points_end_outside_capsule() {
        let body = BodyCollider {
            capsules: alloc::vec![Capsule {
                a: Vec3::new(-0.5, 0.1, 0.0),
                b: Vec3::new(0.4, -0.2, 0.3),
                radius: 0.3,
            }],
            motion: BodyMotion::default(),
        };
        let pose = Pose {
            translation: Vec3::new(0.2, 0.0, -0.1),
            rotation: Quaternion::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.7),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut v = alloc::vec![Vec3::ZERO; 1000];
        collide_body(&mut x, &mut v, &body, &pose, &pose, 0.01, 0.3, 0.1);
        // Independent oracle: distance from the world-space segment.
        let (a, b) = (pose.transform(body.capsules[0].a), pose.transform(body.capsules[0].b));
        for p in &x {
            let ab = b - a;
            let t = ((*p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            let d = (*p - (a + ab * t)).norm() - 0.3;
            assert!(d >= 0.01 - 1e-9, "signed distance {d}");
        }
    }

    #[test]
    fn sample_normals_are_unit_and_on_surface() {
        let body = BodyCollider {
            capsules: alloc::vec![
                Capsule::sphere(Vec3::new(0.0, 0.0, 1.0), 0.2),
                Capsule {
                    a: Vec3::ZERO,
                    b: Vec3::new(0.0, 0.0, 0.8),
                    radius: 0.15
                }
            ],
            motion: BodyMotion::default(),
        };
        let s = body.sample_local(400);
        assert_eq!(s.positions.len(), 400);
        for (p, n) in s.positions.iter().zip(&s.normals) {
            assert!((n.norm() - 1.0).abs() < 1e-12);
            let on_some = body
                .capsules
                .iter()
                .any(|c| c.signed_distance(*p).0.abs() < 1e-9);
            assert!(on_some);
        }
    }

    #[test]
    fn moving_body_drags_velocity() {
        let body = BodyCollider {
            capsules: alloc::vec![Capsule::sphere(Vec3::ZERO, 1.0)],
            motion: BodyMotion::default(),
        };
        let before = still();
        let after = Pose {
            translation: Vec3::new(0.0, 0.0, 0.1),
            rotation: Quaternion::IDENTITY,
        };
        let mut x = [Vec3::new(0.0, 0.0, 1.05)];
        let mut v = [Vec3::ZERO];
        collide_body(&mut x, &mut v, &body, &before, &after, 0.01, 0.0, 0.1);
        assert!((x[0].z - 1.11).abs() < 1e-12);
        assert!((v[0].z - 1.0).abs() < 1e-9);
    }
}
