//! Edge features and lifting of 3-D rotations into the hidden space.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::RotationMatrix;
use crate::math;
use crate::tensor::{Graph, Tensor, Var};

/// Smallest admissible distance between receiver and sender features.
pub const EDGE_FEATURE_FLOOR: f64 = 1e-12;

/// Lifting columns shorter than this (relative to the raw column) are rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Edge feature of a receiver/sender pair with the degeneracy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeature {
    pub value: Vec<f64>,
    /// Set when the pair distance was clamped to the floor.
    pub degenerate: bool,
}

/// `(r + s) / |r - s|`.
pub fn edge_feature(r: &[f64], s: &[f64]) -> EdgeFeature {
    assert_eq!(r.len(), s.len(), "edge feature operands differ in length");
    let dist = math::sqrt(r.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum());
    let degenerate = !(dist >= EDGE_FEATURE_FLOOR);
    let denom = if degenerate { EDGE_FEATURE_FLOOR } else { dist };
    EdgeFeature {
        value: r.iter().zip(s).map(|(a, b)| (a + b) / denom).collect(),
        degenerate,
    }
}

/// Centered form: subtract the pair mean, divide by the mean distance to it.
/// Algebraically identical to [`edge_feature`].
pub fn edge_feature_centered(r: &[f64], s: &[f64]) -> Vec<f64> {
    let mean: Vec<f64> = r.iter().zip(s).map(|(a, b)| 0.5 * (a + b)).collect();
    let dist = |x: &[f64]| math::sqrt(x.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum());
    let sigma = (0.5 * (dist(r) + dist(s))).max(0.5 * EDGE_FEATURE_FLOOR);
    r.iter().zip(s).zip(&mean).map(|((a, b), m)| (a + b - m) / sigma).collect()
}

/// Batched edge features for `[E, d]` receiver and sender rows.
pub fn edge_feature_var<'g>(r: Var<'g>, s: Var<'g>) -> Result<Var<'g>> {
    let dist = r.sub(s)?.l2norm(EDGE_FEATURE_FLOOR);
    r.add(s)?.div_rows(dist)
}

/// Gram-Schmidt orthonormalization of the three columns of a `[d, 3]` matrix.
pub fn semi_orthogonalize(raw: &Tensor) -> Result<Tensor> {
    let g = Graph::new();
    let w = semi_orthogonalize_var(g.constant(raw.clone()))?;
    Ok(w.value())
}

/// Differentiable [`semi_orthogonalize`].
pub fn semi_orthogonalize_var<'g>(raw: Var<'g>) -> Result<Var<'g>> {
    let shape = raw.shape();
    if shape.len() != 2 || shape[1] != 3 || shape[0] < 3 {
        return Err(Error::ShapeMismatch {
            op: "semi_orthogonalize",
            lhs: shape,
            rhs: alloc::vec![0, 3],
        });
    }
    let cols = raw.transpose();
    let mut basis: Vec<Var<'g>> = Vec::with_capacity(3);
    for c in 0..3 {
        let col = cols.slice(0, c, 1)?;
        let mut v = col;
        for q in &basis {
            let proj = q.mul(col)?.sum();
            v = v.sub(q.mul_rows(proj)?)?;
        }
        let norm = v.l2norm(0.0);
        let (n, scale) = (norm.item(), col.l2norm(0.0).item());
        if !(n > RANK_TOLERANCE * scale.max(1.0)) {
            return Err(Error::RankDeficient { column: c, norm: n });
        }
        basis.push(v.div_rows(norm)?);
    }
    Ok(Var::concat(&basis, 0)?.transpose())
}

/// `W R W^T + (I - W W^T)` for semi-orthogonal `W` (`[d, 3]`).
pub fn lift_rotation(rot: &RotationMatrix, w: &Tensor) -> Result<Tensor> {
    let r = Tensor::new(&[3, 3], rot.0.iter().flatten().copied().collect())?;
    let wt = w.transpose();
    let d = w.rows();
    let wrwt = w.matmul(&r)?.matmul(&wt)?;
    let wwt = w.matmul(&wt)?;
    let mut out = Tensor::identity(d);
    for ((o, a), b) in out.data_mut().iter_mut().zip(wrwt.data()).zip(wwt.data()) {
        *o += a - b;
    }
    Ok(out)
}

/// Applies the lifted rotation of each row's frame to `[E, d]` rows:
/// `x + W (R - I) W^T x`, or with `R^T` when `transpose` is set.
pub fn apply_lift<'g>(
    x: Var<'g>,
    w: Var<'g>,
    rotations: &Rc<[RotationMatrix]>,
    transpose: bool,
) -> Result<Var<'g>> {
    let coords = x.matmul(w)?;
    let turned = coords.rotate_rows(rotations.clone(), transpose)?;
    let delta = turned.sub(coords)?.matmul(w.transpose())?;
    x.add(delta)
}

/// Dot product of a query with the edge feature of `(r, s)`.
pub fn attention_logit(q: &[f64], r: &[f64], s: &[f64]) -> f64 {
    q.iter().zip(edge_feature(r, s).value).map(|(a, b)| a * b).sum()
}

/// Matrix-vector product for a square `[d, d]` tensor.
pub fn mat_vec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quat_to_matrix, Quaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_lift(rng: &mut ChaCha8Rng, d: usize) -> Tensor {
        let raw = Tensor::new(&[d, 3], (0..3 * d).map(|_| math::gaussian(rng)).collect()).unwrap();
        semi_orthogonalize(&raw).unwrap()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
        quat_to_matrix(Quaternion::random(rng)).unwrap()
    }

    #[test]
    fn edge_feature_hand_value() {
        let f = edge_feature(&[1.0, 0.0], &[0.0, 1.0]);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((f.value[0] - h).abs() < 1e-15 && (f.value[1] - h).abs() < 1e-15);
        assert!(!f.degenerate);
    }

    #[test]
    fn edge_feature_flags_coincident_pair() {
        let f = edge_feature(&[0.3, 0.3], &[0.3, 0.3]);
        assert!(f.degenerate);
        assert!(f.value.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn centered_form_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (r, s) = (random_vec(&mut rng, 16), random_vec(&mut rng, 16));
            let a = edge_feature(&r, &s).value;
            let b = edge_feature_centered(&r, &s);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn semi_orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_lift(&mut rng, 9);
        let wtw = w.transpose().matmul(&w).unwrap();
        assert!(wtw.max_abs_diff(&Tensor::identity(3)) < 1e-12);
    }

    #[test]
    fn rank_deficient_lift_rejected() {
        let mut raw = Tensor::zeros(&[5, 3]);
        for i in 0..5 {
            raw.data_mut()[3 * i] = 1.0 + i as f64;
            raw.data_mut()[3 * i + 1] = 2.0 * (1.0 + i as f64);
            raw.data_mut()[3 * i + 2] = (i * i) as f64;
        }
        assert!(matches!(semi_orthogonalize(&raw), Err(Error::RankDeficient { column: 1, .. })));
    }

    #[test]
    fn lift_base_case_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rot = random_rotation(&mut rng);
        let eye = Tensor::identity(3);
        let lifted = lift_rotation(&rot, &eye).unwrap();
        let direct = Tensor::new(&[3, 3], rot.0.iter().flatten().copied().collect()).unwrap();
        assert!(lifted.max_abs_diff(&direct) < 1e-15);
        let w = random_lift(&mut rng, 8);
        assert!(lift_rotation(&RotationMatrix::IDENTITY, &w).unwrap().max_abs_diff(&Tensor::identity(8)) < 1e-14);
    }

    #[test]
    fn lift_is_homomorphism_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let w = random_lift(&mut rng, 7);
            let (a, b) = (random_rotation(&mut rng), random_rotation(&mut rng));
            let lab = lift_rotation(&(a * b), &w).unwrap();
            let la_lb = lift_rotation(&a, &w).unwrap().matmul(&lift_rotation(&b, &w).unwrap()).unwrap();
            assert!(lab.max_abs_diff(&la_lb) < 1e-12);
            let l = lift_rotation(&a, &w).unwrap();
            assert!(l.transpose().matmul(&l).unwrap().max_abs_diff(&Tensor::identity(7)) < 1e-12);
        }
    }

    #[test]
    fn batched_lift_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 6;
        let w = random_lift(&mut rng, d);
        let rots: Vec<RotationMatrix> = (0..4).map(|_| random_rotation(&mut rng)).collect();
        let x = Tensor::new(&[4, d], random_vec(&mut rng, 4 * d)).unwrap();
        let g = Graph::new();
        let rc: Rc<[RotationMatrix]> = rots.clone().into();
        for transpose in [false, true] {
            let y = apply_lift(g.constant(x.clone()), g.constant(w.clone()), &rc, transpose).unwrap().value();
            for (i, rot) in rots.iter().enumerate() {
                let r = if transpose { rot.transpose() } else { *rot };
                let expect = mat_vec(&lift_rotation(&r, &w).unwrap(), x.row(i));
                for (a, b) in y.row(i).iter().zip(&expect) {
                    assert!((a - b).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn edge_feature_equivariant_under_lift() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = random_lift(&mut rng, 10);
        let q = lift_rotation(&random_rotation(&mut rng), &w).unwrap();
        let (r, s) = (random_vec(&mut rng, 10), random_vec(&mut rng, 10));
        let lhs = edge_feature(&mat_vec(&q, &r), &mat_vec(&q, &s)).value;
        let rhs = mat_vec(&q, &edge_feature(&r, &s).value);
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
