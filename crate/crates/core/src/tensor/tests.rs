use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::{Error, Result};
use crate::geometry::{quat_to_matrix, Quaternion, RotationMatrix};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn softmax_of_equal_logits() {
    let g = Graph::new();
    let x = g.constant(Tensor::new(&[2], alloc::vec![0.0, 0.0]).unwrap());
    assert_eq!(x.softmax(0).unwrap().value().data(), &[0.5, 0.5]);
}

#[test]
fn identity_matmul() {
    let g = Graph::new();
    let i = g.constant(Tensor::identity(3));
    let v = g.constant(Tensor::new(&[3, 1], alloc::vec![1.0, -2.0, 3.5]).unwrap());
    assert_eq!(i.matmul(v).unwrap().value(), v.value());
}

#[test]
fn mse_of_self_is_zero_with_zero_gradient() {
    let g = Graph::new();
    let w = g.param(Tensor::new(&[4], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let t = g.constant(Tensor::new(&[4], alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let loss = w.mse(t).unwrap();
    assert_eq!(loss.item(), 0.0);
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(w).data().iter().all(|v| *v == 0.0));
}

#[test]
fn linear_loss_gradient_is_input() {
    let g = Graph::new();
    let x_val = Tensor::new(&[3], alloc::vec![0.5, -1.0, 2.0]).unwrap();
    let w = g.param(Tensor::new(&[3], alloc::vec![1.0, 1.0, 1.0]).unwrap());
    let x = g.constant(x_val.clone());
    let unused = g.param(Tensor::zeros(&[2, 2]));
    let loss = w.mul(x).unwrap().sum();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(w), x_val);
    assert_eq!(grads.get(unused), Tensor::zeros(&[2, 2]));
}

#[test]
fn non_scalar_loss_rejected() {
    let g = Graph::new();
    let w = g.param(Tensor::zeros(&[2, 2]));
    assert_eq!(g.backward(w).unwrap_err(), Error::NonScalarLoss(alloc::vec![2, 2]));
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[4, 5]));
    let err = a.matmul(b).unwrap_err();
    assert_eq!(
        err,
        Error::ShapeMismatch {
            op: "matmul",
            lhs: alloc::vec![2, 3],
            rhs: alloc::vec![4, 5]
        }
    );
    let msg = alloc::format!("{err}");
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"));
    assert!(a.add(b).is_err());
}

#[test]
fn softmax_sums_to_one_and_is_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (r, c) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let t = Tensor::new(&[r, c], (0..r * c).map(|_| rng.gen_range(-30.0..30.0)).collect()).unwrap();
        let g = Graph::new();
        let x = g.constant(t);
        let by_row = x.softmax(1).unwrap().value();
        for i in 0..r {
            let s: f64 = by_row.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(by_row.row(i).iter().all(|v| *v > 0.0));
        }
        let by_col = x.softmax(0).unwrap().value();
        for j in 0..c {
            let s: f64 = (0..r).map(|i| by_col.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn segment_softmax_normalizes_groups() {
    let g = Graph::new();
    let x = g.constant(Tensor::new(&[5, 1], alloc::vec![1.0, 2.0, 3.0, 7.0, 7.0]).unwrap());
    let seg: Rc<[u32]> = Rc::from(alloc::vec![0, 0, 0, 1, 1]);
    let y = x.segment_softmax(seg).unwrap().value();
    assert!((y.data()[0] + y.data()[1] + y.data()[2] - 1.0).abs() < 1e-12);
    assert_eq!(&y.data()[3..], &[0.5, 0.5]);
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = random(&mut rng, &[5, 4]);
    let x = random(&mut rng, &[3, 5]);
    let run = || {
        let g = Graph::new();
        let wv = g.param(w.clone());
        let xv = g.constant(x.clone());
        let loss = xv.matmul(wv).unwrap().relu().softmax(1).unwrap().square().unwrap().sum();
        g.backward(loss).unwrap().get(wv)
    };
    assert_eq!(run().data(), run().data());
}

/// Three-layer ReLU MLP with biases, built from primitives.
fn mlp<'g>(x: Var<'g>, p: &[Var<'g>]) -> Result<Var<'g>> {
    let rows = x.shape()[0];
    let mut h = x;
    for (k, pair) in p.chunks(2).enumerate() {
        h = h.matmul(pair[0])?.add(pair[1].broadcast_rows(rows))?;
        if k + 1 < p.len() / 2 {
            h = h.relu();
        }
    }
    Ok(h)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dims = [4, 6, 5, 2];
    let mut inputs = alloc::vec![random(&mut rng, &[3, 4])];
    for w in dims.windows(2) {
        inputs.push(random(&mut rng, &[w[0], w[1]]));
        inputs.push(random(&mut rng, &[w[1]]));
    }
    let target = random(&mut rng, &[3, 2]);
    let err = gradcheck(
        |g, v| {
            let t = g.constant(target.clone());
            mlp(v[0], &v[1..])?.mse(t)
        },
        &inputs,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-5, "max relative error {err}");
}

/// `sum(y * w)` with `w` reshaped to `y`.
fn dot<'g>(y: Var<'g>, w: &Tensor) -> Result<Var<'g>> {
    let wv = y.graph().constant(w.clone().reshaped(&y.shape())?);
    Ok(y.mul(wv)?.sum())
}

fn check(name: &str, inputs: &[Tensor], f: impl for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>) {
    let err = gradcheck(f, inputs, 1e-6).unwrap();
    assert!(err < 1e-5, "{name}: max relative error {err}");
}

/// Every primitive, on 10 random shapes each. A random weighting turns each
/// output into a scalar so all output entries are exercised.
#[test]
fn every_primitive_passes_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let (r, c, k) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let a = random(&mut rng, &[r, c]);
        let b = random(&mut rng, &[r, c]);
        let m = random(&mut rng, &[c, k]);
        let w_rc = random(&mut rng, &[r, c]);
        let w_rk = random(&mut rng, &[r, k]);
        let w_r1 = random(&mut rng, &[r, 1]);

        check("matmul", &[a.clone(), m.clone()], |_, v| dot(v[0].matmul(v[1])?, &w_rk));
        check("add", &[a.clone(), b.clone()], |_, v| dot(v[0].add(v[1])?, &w_rc));
        check("sub", &[a.clone(), b.clone()], |_, v| dot(v[0].sub(v[1])?, &w_rc));
        check("mul", &[a.clone(), b.clone()], |_, v| dot(v[0].mul(v[1])?, &w_rc));
        check("scale", &[a.clone()], |_, v| dot(v[0].scale(-1.7), &w_rc));
        check("add_scalar", &[a.clone()], |_, v| dot(v[0].add_scalar(0.3), &w_rc));
        check("sum", &[a.clone()], |_, v| Ok(v[0].sum().scale(2.0)));
        check("mean", &[a.clone()], |_, v| Ok(v[0].mean()));
        check("sum_cols", &[a.clone()], |_, v| dot(v[0].sum_cols(), &w_r1));
        check("relu", &[a.clone()], |_, v| dot(v[0].relu(), &w_rc));
        check("softmax1", &[a.clone()], |_, v| dot(v[0].softmax(1)?, &w_rc));
        check("softmax0", &[a.clone()], |_, v| dot(v[0].softmax(0)?, &w_rc));
        check("l2norm", &[a.clone()], |_, v| dot(v[0].l2norm(1e-12), &w_r1));
        check("mse", &[a.clone(), b.clone()], |_, v| v[0].mse(v[1]));
        check("transpose", &[a.clone()], |_, v| dot(v[0].transpose().transpose(), &w_rc));
        check("concat0", &[a.clone(), b.clone()], |g, v| {
            let w = g.constant(Tensor::new(&[2 * r, c], w_rc.data().iter().chain(w_rc.data()).map(|x| x * 1.3).collect())?);
            Ok(Var::concat(&[v[0], v[1]], 0)?.mul(w)?.sum())
        });
        check("concat1_slice", &[a.clone(), b.clone()], |_, v| {
            let cat = Var::concat(&[v[0], v[1]], 1)?;
            dot(cat.slice(1, c, c)?.add(cat.slice(1, 0, c)?.scale(0.5))?, &w_rc)
        });
        check("slice0", &[a.clone()], |_, v| dot(v[0].slice(0, 0, r)?, &w_rc));
        let idx: Rc<[u32]> = (0..r + 2).map(|_| rng.gen_range(0..r as u32)).collect::<Vec<_>>().into();
        let w_g = random(&mut rng, &[r + 2, c]);
        check("gather", &[a.clone()], |_, v| dot(v[0].gather(idx.clone())?, &w_g));
        let dst: Rc<[u32]> = (0..r).map(|_| rng.gen_range(0..3u32)).collect::<Vec<_>>().into();
        let w_s = random(&mut rng, &[3, c]);
        check("scatter_add", &[a.clone()], |_, v| dot(v[0].scatter_add(dst.clone(), 3)?, &w_s));
        let s = Tensor::new(&[r, 1], (0..r).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap();
        check("mul_rows", &[a.clone(), s.clone()], |_, v| dot(v[0].mul_rows(v[1])?, &w_rc));
        check("div_rows", &[a.clone(), s.clone()], |_, v| dot(v[0].div_rows(v[1])?, &w_rc));
        let row = random(&mut rng, &[c]);
        check("broadcast_rows", &[row], |_, v| dot(v[0].broadcast_rows(r), &w_rc));
        let logits = random(&mut rng, &[r + 3, 1]);
        let seg: Rc<[u32]> = (0..r + 3).map(|_| rng.gen_range(0..2u32)).collect::<Vec<_>>().into();
        let w_seg = random(&mut rng, &[r + 3, 1]);
        check("segment_softmax", &[logits], |_, v| dot(v[0].segment_softmax(seg.clone())?, &w_seg));
        let p = random(&mut rng, &[r, 3]);
        let q = random(&mut rng, &[r, 3]);
        let w_3 = random(&mut rng, &[r, 3]);
        let rots: Rc<[RotationMatrix]> = (0..r)
            .map(|_| quat_to_matrix(Quaternion::random(&mut rng)).unwrap())
            .collect::<Vec<_>>()
            .into();
        check("rotate_rows", &[p.clone()], |_, v| dot(v[0].rotate_rows(rots.clone(), false)?, &w_3));
        check("rotate_rows_t", &[p.clone()], |_, v| dot(v[0].rotate_rows(rots.clone(), true)?, &w_3));
        check("cross_rows", &[p.clone(), q.clone()], |_, v| dot(v[0].cross_rows(v[1])?, &w_3));
        check("reshape", &[p], |_, v| dot(v[0].reshape(&[3 * r])?, &w_3));
    }
}

#[test]
fn gradcheck_of_identity_loss_is_exact() {
    let t = Tensor::new(&[3], alloc::vec![0.1, 0.2, 0.3]).unwrap();
    let err = gradcheck(|_, v| Ok(v[0].sum()), &[t], 1e-6).unwrap();
    assert!(err < 1e-9);
}
