//! Unit quaternions, rotation matrices and randomized canonical frames.

use core::ops::Mul;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};
use crate::math;

/// Quaternion stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn normalized(&self) -> Option<Quaternion> {
        let n = self.norm();
        (n > 1e-300).then(|| Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quaternion {
        let a = axis.try_normalize().unwrap_or(Vec3::Z);
        let (s, c) = (math::sin(angle * 0.5), math::cos(angle * 0.5));
        Quaternion::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Uniformly distributed unit quaternion (normalized 4D Gaussian).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Quaternion {
        loop {
            let q = Quaternion::new(
                math::gaussian(rng),
                math::gaussian(rng),
                math::gaussian(rng),
                math::gaussian(rng),
            );
            if let Some(q) = q.normalized() {
                return q;
            }
        }
    }

    /// Axis and angle in `[0, pi]`; axis defaults to `Z` for the identity.
    pub fn to_axis_angle(&self) -> (Vec3, f64) {
        let q = if self.w < 0.0 { -*self } else { *self };
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        let angle = 2.0 * math::atan2(s, q.w);
        (v.try_normalize().unwrap_or(Vec3::Z), angle)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

impl core::ops::Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Row-major 3x3 matrix. Used for rotations; the rows of a canonical frame are
/// its local x, y and z axes expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(x: Vec3, y: Vec3, z: Vec3) -> Self {
        RotationMatrix([x.to_array(), y.to_array(), z.to_array()])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.0[i])
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    /// `R * v`
    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `R^T * v`
    #[inline]
    pub fn apply_transpose(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest entry of `|R R^T - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let p = *self * self.transpose();
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((p.0[i][j] - target).abs());
            }
        }
        err
    }

    pub fn max_abs_diff(&self, o: &RotationMatrix) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                err = err.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        err
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, o: RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_matrix(q: Quaternion) -> Result<RotationMatrix> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitQuaternion(n));
    }
    let Quaternion { w, x, y, z } = q;
    Ok(RotationMatrix([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]))
}

/// Local frame whose z row is `normal` and whose x row is a random unit
/// vector orthogonal to it. The returned matrix maps world coordinates into
/// the local frame, so `F * normal = (0, 0, 1)`.
pub fn canonical_frame<R: Rng + ?Sized>(normal: Vec3, rng: &mut R) -> Result<RotationMatrix> {
    let n = normal.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::ZeroNormal);
    }
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::NonFinite("canonical_frame: normal is not unit length".into()));
    }
    let z = normal / n;
    let x = loop {
        let v = Vec3::new(math::gaussian(rng), math::gaussian(rng), math::gaussian(rng));
        let t = v - z * v.dot(z);
        // Reject samples nearly parallel to the normal.
        if t.norm() > 1e-3 {
            break t / t.norm();
        }
    };
    let y = z.cross(x);
    Ok(RotationMatrix::from_rows(x, y, z))
}
