//! Tape-based reverse-mode differentiation over [`Tensor`] values.

use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};

use super::value::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};
use crate::geometry::RotationMatrix;
use crate::math;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Sum(usize),
    SumCols(usize),
    Mean(usize),
    Relu(usize),
    Softmax { input: usize, axis: usize },
    SegmentSoftmax { input: usize, segments: Rc<[u32]> },
    RowNorm { input: usize, floor: f64 },
    Mse(usize, usize),
    Gather { input: usize, index: Rc<[u32]> },
    ScatterAdd { input: usize, index: Rc<[u32]> },
    MulRows(usize, usize),
    DivRows(usize, usize),
    Transpose(usize),
    BroadcastRows(usize),
    RotateRows { input: usize, rotations: Rc<[RotationMatrix]>, transpose: bool },
    CrossRows(usize, usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in creation order, which is a topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'g> {
    id: usize,
    graph: &'g Graph,
}

/// Gradients indexed by node; `None` for nodes the loss does not depend on
/// through differentiable inputs.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` has no influence on the loss.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        match &self.grads[v.id] {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[v.id]),
        }
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            id: nodes.len() - 1,
            graph: self,
        }
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, input: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.needs(&[input]);
        self.push(value, op, rg)
    }

    fn binary(&self, a: usize, b: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.needs(&[a, b]);
        self.push(value, op, rg)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::NonScalarLoss(shapes[loss.id].clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = alloc::vec![None; loss.id + 1];
        grads[loss.id] = Some(alloc::vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let out = &node.value;
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
                if !nodes[i].requires_grad {
                    return;
                }
                let slot = grads[i].get_or_insert_with(|| alloc::vec![0.0; nodes[i].value.len()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, k) = val(*a).dims2();
                    let n = val(*b).cols();
                    let (ad, bd) = (val(*a).data(), val(*b).data());
                    acc(*a, &mut |s| matmul_nt_into(&g, bd, s, m, n, k));
                    acc(*b, &mut |s| matmul_tn_into(ad, &g, s, m, k, n));
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |s| add_into(s, &g, 1.0));
                    acc(*b, &mut |s| add_into(s, &g, 1.0));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |s| add_into(s, &g, 1.0));
                    acc(*b, &mut |s| add_into(s, &g, -1.0));
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (val(*a).data(), val(*b).data());
                    acc(*a, &mut |s| {
                        for ((o, gi), bi) in s.iter_mut().zip(&g).zip(bd) {
                            *o += gi * bi;
                        }
                    });
                    acc(*b, &mut |s| {
                        for ((o, gi), ai) in s.iter_mut().zip(&g).zip(ad) {
                            *o += gi * ai;
                        }
                    });
                }
                Op::Scale(a, c) => acc(*a, &mut |s| add_into(s, &g, *c)),
                Op::AddScalar(a) => acc(*a, &mut |s| add_into(s, &g, 1.0)),
                Op::Concat { inputs, axis } => {
                    let (rows, cols) = out.dims2();
                    let mut offset = 0;
                    for &i in inputs {
                        let (r, c) = val(i).dims2();
                        if *axis == 0 {
                            let range = offset * cols..(offset + r) * cols;
                            acc(i, &mut |s| add_into(s, &g[range.clone()], 1.0));
                            offset += r;
                        } else {
                            acc(i, &mut |s| {
                                for row in 0..rows {
                                    for j in 0..c {
                                        s[row * c + j] += g[row * cols + offset + j];
                                    }
                                }
                            });
                            offset += c;
                        }
                    }
                }
                Op::Slice { input, axis, start } => {
                    let (r_in, c_in) = val(*input).dims2();
                    let (r, c) = out.dims2();
                    acc(*input, &mut |s| {
                        for i in 0..r {
                            for j in 0..c {
                                let (si, sj) = if *axis == 0 { (i + start, j) } else { (i, j + start) };
                                debug_assert!(si < r_in && sj < c_in);
                                s[si * c_in + sj] += g[i * c + j];
                            }
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|o| *o += g[0])),
                Op::Mean(a) => {
                    let n = val(*a).len() as f64;
                    acc(*a, &mut |s| s.iter_mut().for_each(|o| *o += g[0] / n));
                }
                Op::SumCols(a) => {
                    let (_, c) = val(*a).dims2();
                    acc(*a, &mut |s| {
                        for (k, o) in s.iter_mut().enumerate() {
                            *o += g[k / c];
                        }
                    });
                }
                Op::Relu(a) => {
                    let ad = val(*a).data();
                    acc(*a, &mut |s| {
                        for ((o, gi), x) in s.iter_mut().zip(&g).zip(ad) {
                            if *x > 0.0 {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::Softmax { input, axis } => {
                    let y = out.data();
                    let (groups, glen, stride_g, stride_k) = softmax_layout(out, *axis);
                    acc(*input, &mut |s| {
                        for gi in 0..groups {
                            let at = |k: usize| gi * stride_g + k * stride_k;
                            let dot: f64 = (0..glen).map(|k| y[at(k)] * g[at(k)]).sum();
                            for k in 0..glen {
                                s[at(k)] += y[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    });
                }
                Op::SegmentSoftmax { input, segments } => {
                    let y = out.data();
                    let nseg = segments.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
                    let mut dot = alloc::vec![0.0; nseg];
                    for (e, &sg) in segments.iter().enumerate() {
                        dot[sg as usize] += y[e] * g[e];
                    }
                    acc(*input, &mut |s| {
                        for (e, &sg) in segments.iter().enumerate() {
                            s[e] += y[e] * (g[e] - dot[sg as usize]);
                        }
                    });
                }
                Op::RowNorm { input, floor } => {
                    let x = val(*input);
                    let c = x.cols();
                    let y = out.data();
                    acc(*input, &mut |s| {
                        for (i, &n) in y.iter().enumerate() {
                            let raw = math::sqrt(x.row(i).iter().map(|v| v * v).sum());
                            if raw < *floor {
                                continue;
                            }
                            for j in 0..c {
                                s[i * c + j] += g[i] * x.data()[i * c + j] / n;
                            }
                        }
                    });
                }
                Op::Mse(a, b) => {
                    let (ad, bd) = (val(*a).data(), val(*b).data());
                    let n = ad.len() as f64;
                    acc(*a, &mut |s| {
                        for (k, o) in s.iter_mut().enumerate() {
                            *o += g[0] * 2.0 * (ad[k] - bd[k]) / n;
                        }
                    });
                    acc(*b, &mut |s| {
                        for (k, o) in s.iter_mut().enumerate() {
                            *o -= g[0] * 2.0 * (ad[k] - bd[k]) / n;
                        }
                    });
                }
                Op::Gather { input, index } => {
                    let c = out.cols();
                    acc(*input, &mut |s| {
                        for (row, &src) in index.iter().enumerate() {
                            let src = src as usize;
                            for j in 0..c {
                                s[src * c + j] += g[row * c + j];
                            }
                        }
                    });
                }
                Op::ScatterAdd { input, index } => {
                    let c = out.cols();
                    acc(*input, &mut |s| {
                        for (row, &dst) in index.iter().enumerate() {
                            let dst = dst as usize;
                            for j in 0..c {
                                s[row * c + j] += g[dst * c + j];
                            }
                        }
                    });
                }
                Op::MulRows(a, w) | Op::DivRows(a, w) => {
                    let div = matches!(node.op, Op::DivRows(..));
                    let (ad, wd) = (val(*a).data(), val(*w).data());
                    let c = val(*a).cols();
                    acc(*a, &mut |s| {
                        for (k, o) in s.iter_mut().enumerate() {
                            let wk = wd[k / c];
                            *o += if div { g[k] / wk } else { g[k] * wk };
                        }
                    });
                    acc(*w, &mut |s| {
                        for (i, o) in s.iter_mut().enumerate() {
                            let dot: f64 = (0..c).map(|j| g[i * c + j] * ad[i * c + j]).sum();
                            *o += if div { -dot / (wd[i] * wd[i]) } else { dot };
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (r, c) = out.dims2();
                    acc(*a, &mut |s| {
                        for i in 0..r {
                            for j in 0..c {
                                s[j * r + i] += g[i * c + j];
                            }
                        }
                    });
                }
                Op::BroadcastRows(a) => {
                    let c = out.cols();
                    acc(*a, &mut |s| {
                        for (k, gv) in g.iter().enumerate() {
                            s[k % c] += gv;
                        }
                    });
                }
                Op::RotateRows { input, rotations, transpose } => {
                    acc(*input, &mut |s| {
                        for (i, r) in rotations.iter().enumerate() {
                            let gi = crate::geometry::Vec3::new(g[3 * i], g[3 * i + 1], g[3 * i + 2]);
                            let d = if *transpose { r.apply(gi) } else { r.apply_transpose(gi) };
                            s[3 * i] += d.x;
                            s[3 * i + 1] += d.y;
                            s[3 * i + 2] += d.z;
                        }
                    });
                }
                Op::CrossRows(a, b) => {
                    let (ad, bd) = (val(*a).data(), val(*b).data());
                    let v = |d: &[f64], i: usize| crate::geometry::Vec3::new(d[3 * i], d[3 * i + 1], d[3 * i + 2]);
                    let rows = out.rows();
                    acc(*a, &mut |s| {
                        for i in 0..rows {
                            let d = v(bd, i).cross(v(&g, i));
                            s[3 * i] += d.x;
                            s[3 * i + 1] += d.y;
                            s[3 * i + 2] += d.z;
                        }
                    });
                    acc(*b, &mut |s| {
                        for i in 0..rows {
                            let d = v(&g, i).cross(v(ad, i));
                            s[3 * i] += d.x;
                            s[3 * i + 1] += d.y;
                            s[3 * i + 2] += d.z;
                        }
                    });
                }
                Op::Reshape(a) => acc(*a, &mut |s| add_into(s, &g, 1.0)),
            }
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|d| Tensor::new(&shapes[i], d).expect("gradient shape")))
            .chain(core::iter::repeat_with(|| None))
            .take(nodes.len())
            .collect();
        Ok(Gradients { grads, shapes })
    }
}

/// `(groups, group length, group stride, element stride)` for a softmax axis.
fn softmax_layout(t: &Tensor, axis: usize) -> (usize, usize, usize, usize) {
    let (r, c) = t.dims2();
    if t.shape().len() < 2 {
        (1, t.len(), 0, 1)
    } else if axis == 1 {
        (r, c, c, 1)
    } else {
        (c, r, 1, c)
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.value(self.id).clone()
    }

    pub fn with_value<T>(&self, f: impl FnOnce(&Tensor) -> T) -> T {
        f(&self.graph.value(self.id))
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.value(self.id).shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.graph.value(self.id).item()
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let v = self.graph.value(self.id).matmul(&self.graph.value(other.id))?;
        Ok(self.graph.binary(self.id, other.id, v, Op::MatMul(self.id, other.id)))
    }

    fn zip_with(self, other: Var<'g>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = (self.graph.value(self.id), self.graph.value(other.id));
        if a.shape() != b.shape() {
            return Err(mismatch(name, &a, &b));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(a.shape(), data)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        let v = self.zip_with(other, "add", |a, b| a + b)?;
        Ok(self.graph.binary(self.id, other.id, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        let v = self.zip_with(other, "sub", |a, b| a - b)?;
        Ok(self.graph.binary(self.id, other.id, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        let v = self.zip_with(other, "mul", |a, b| a * b)?;
        Ok(self.graph.binary(self.id, other.id, v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let t = self.graph.value(self.id);
        let v = Tensor::new(t.shape(), t.data().iter().map(|x| x * c).collect()).unwrap();
        drop(t);
        self.graph.unary(self.id, v, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        let t = self.graph.value(self.id);
        let v = Tensor::new(t.shape(), t.data().iter().map(|x| x + c).collect()).unwrap();
        drop(t);
        self.graph.unary(self.id, v, Op::AddScalar(self.id))
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.mul(self)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(self) -> Var<'g> {
        let s = self.graph.value(self.id).data().iter().sum();
        self.graph.unary(self.id, Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'g> {
        let t = self.graph.value(self.id);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        drop(t);
        self.graph.unary(self.id, Tensor::scalar(s), Op::Mean(self.id))
    }

    /// Row sums of a 2D tensor, shape `[rows, 1]`.
    pub fn sum_cols(self) -> Var<'g> {
        let t = self.graph.value(self.id);
        let (r, _) = t.dims2();
        let data = (0..r).map(|i| t.row(i).iter().sum()).collect();
        drop(t);
        self.graph.unary(self.id, Tensor::new(&[r, 1], data).unwrap(), Op::SumCols(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        let t = self.graph.value(self.id);
        let v = Tensor::new(t.shape(), t.data().iter().map(|x| x.max(0.0)).collect()).unwrap();
        drop(t);
        self.graph.unary(self.id, v, Op::Relu(self.id))
    }

    /// Softmax along `axis` (0 = down columns, 1 = along rows) with max subtraction.
    /// A rank-1 tensor is normalized as a whole.
    pub fn softmax(self, axis: usize) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        let rank = t.shape().len();
        if axis > 1 || (rank < 2 && axis != 0) || rank > 2 {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                lhs: t.shape().to_vec(),
                rhs: alloc::vec![axis],
            });
        }
        let mut out = t.data().to_vec();
        let (groups, glen, stride_g, stride_k) = softmax_layout(&t, axis);
        for gi in 0..groups {
            let at = |k: usize| gi * stride_g + k * stride_k;
            let m = (0..glen).map(|k| out[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..glen {
                let e = math::exp(out[at(k)] - m);
                out[at(k)] = e;
                z += e;
            }
            for k in 0..glen {
                out[at(k)] /= z;
            }
        }
        let v = Tensor::new(t.shape(), out)?;
        drop(t);
        Ok(self.graph.unary(self.id, v, Op::Softmax { input: self.id, axis }))
    }

    /// Softmax over groups of entries sharing a segment id. The tensor holds
    /// one logit per entry (shape `[E]` or `[E, 1]`).
    pub fn segment_softmax(self, segments: Rc<[u32]>) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        if t.len() != segments.len() {
            return Err(Error::LengthMismatch {
                what: "segment_softmax segments",
                expected: t.len(),
                got: segments.len(),
            });
        }
        let nseg = segments.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
        let mut maxv = alloc::vec![f64::NEG_INFINITY; nseg];
        for (x, &s) in t.data().iter().zip(segments.iter()) {
            maxv[s as usize] = maxv[s as usize].max(*x);
        }
        let mut out: Vec<f64> = t
            .data()
            .iter()
            .zip(segments.iter())
            .map(|(x, &s)| math::exp(x - maxv[s as usize]))
            .collect();
        let mut z = alloc::vec![0.0; nseg];
        for (e, &s) in out.iter().zip(segments.iter()) {
            z[s as usize] += e;
        }
        for (e, &s) in out.iter_mut().zip(segments.iter()) {
            *e /= z[s as usize];
        }
        let v = Tensor::new(t.shape(), out)?;
        drop(t);
        Ok(self.graph.unary(self.id, v, Op::SegmentSoftmax { input: self.id, segments }))
    }

    /// Euclidean norm of each row, clamped below at `floor` (the gradient is
    /// zero where the clamp is active). Shape `[rows, 1]`.
    pub fn l2norm(self, floor: f64) -> Var<'g> {
        let t = self.graph.value(self.id);
        let r = t.rows();
        let data = (0..r)
            .map(|i| math::sqrt(t.row(i).iter().map(|v| v * v).sum()).max(floor))
            .collect();
        drop(t);
        self.graph.unary(
            self.id,
            Tensor::new(&[r, 1], data).unwrap(),
            Op::RowNorm { input: self.id, floor },
        )
    }

    /// Mean of squared elementwise differences.
    pub fn mse(self, target: Var<'g>) -> Result<Var<'g>> {
        let d = self.zip_with(target, "mse", |a, b| (a - b) * (a - b))?;
        let v = d.data().iter().sum::<f64>() / d.len().max(1) as f64;
        Ok(self.graph.binary(self.id, target.id, Tensor::scalar(v), Op::Mse(self.id, target.id)))
    }

    /// Concatenation along `axis` of 2D tensors.
    pub fn concat(parts: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let graph = parts.first().expect("concat of nothing").graph;
        let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| graph.value(p.id)).collect();
        let (r0, c0) = vals[0].dims2();
        let mut data = Vec::new();
        let shape = if axis == 0 {
            let mut rows = 0;
            for v in &vals {
                if v.cols() != c0 {
                    return Err(mismatch("concat", &vals[0], v));
                }
                rows += v.rows();
                data.extend_from_slice(v.data());
            }
            [rows, c0]
        } else {
            let cols: usize = vals.iter().map(|v| v.cols()).sum();
            for v in &vals {
                if v.rows() != r0 {
                    return Err(mismatch("concat", &vals[0], v));
                }
            }
            data.reserve(r0 * cols);
            for i in 0..r0 {
                for v in &vals {
                    data.extend_from_slice(v.row(i));
                }
            }
            [r0, cols]
        };
        drop(vals);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = graph.needs(&ids);
        Ok(graph.push(Tensor::new(&shape, data)?, Op::Concat { inputs: ids, axis }, rg))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        let (r, c) = t.dims2();
        let limit = if axis == 0 { r } else { c };
        if start + len > limit || axis > 1 {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: t.shape().to_vec(),
                rhs: alloc::vec![axis, start, len],
            });
        }
        let (shape, data) = if axis == 0 {
            ([len, c], t.data()[start * c..(start + len) * c].to_vec())
        } else {
            let mut d = Vec::with_capacity(r * len);
            for i in 0..r {
                d.extend_from_slice(&t.row(i)[start..start + len]);
            }
            ([r, len], d)
        };
        drop(t);
        Ok(self.graph.unary(self.id, Tensor::new(&shape, data)?, Op::Slice { input: self.id, axis, start }))
    }

    /// Rows selected by `index` (repeats allowed).
    pub fn gather(self, index: Rc<[u32]>) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        let (r, c) = t.dims2();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i as usize >= r {
                return Err(Error::LengthMismatch {
                    what: "gather index",
                    expected: r,
                    got: i as usize,
                });
            }
            data.extend_from_slice(t.row(i as usize));
        }
        drop(t);
        let v = Tensor::new(&[index.len(), c], data)?;
        Ok(self.graph.unary(self.id, v, Op::Gather { input: self.id, index }))
    }

    /// Sums rows into `rows` output rows: row `k` goes to `index[k]`.
    pub fn scatter_add(self, index: Rc<[u32]>, rows: usize) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        let (r, c) = t.dims2();
        if r != index.len() {
            return Err(Error::LengthMismatch {
                what: "scatter_add index",
                expected: r,
                got: index.len(),
            });
        }
        let mut data = alloc::vec![0.0; rows * c];
        for (k, &dst) in index.iter().enumerate() {
            let dst = dst as usize;
            if dst >= rows {
                return Err(Error::LengthMismatch {
                    what: "scatter_add target",
                    expected: rows,
                    got: dst,
                });
            }
            for j in 0..c {
                data[dst * c + j] += t.data()[k * c + j];
            }
        }
        drop(t);
        let v = Tensor::new(&[rows, c], data)?;
        Ok(self.graph.unary(self.id, v, Op::ScatterAdd { input: self.id, index }))
    }

    fn row_op(self, w: Var<'g>, name: &'static str, div: bool) -> Result<Var<'g>> {
        let (a, s) = (self.graph.value(self.id), self.graph.value(w.id));
        let (r, c) = a.dims2();
        if s.len() != r {
            return Err(mismatch(name, &a, &s));
        }
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(k, x)| if div { x / s.data()[k / c] } else { x * s.data()[k / c] })
            .collect();
        let v = Tensor::new(a.shape(), data)?;
        drop((a, s));
        let op = if div { Op::DivRows(self.id, w.id) } else { Op::MulRows(self.id, w.id) };
        Ok(self.graph.binary(self.id, w.id, v, op))
    }

    /// Scales row `i` by `w[i]`; `w` has one entry per row.
    pub fn mul_rows(self, w: Var<'g>) -> Result<Var<'g>> {
        self.row_op(w, "mul_rows", false)
    }

    /// Divides row `i` by `w[i]`.
    pub fn div_rows(self, w: Var<'g>) -> Result<Var<'g>> {
        self.row_op(w, "div_rows", true)
    }

    pub fn transpose(self) -> Var<'g> {
        let v = self.graph.value(self.id).transpose();
        self.graph.unary(self.id, v, Op::Transpose(self.id))
    }

    /// Repeats a single row (`[n]` or `[1, n]`) `rows` times.
    pub fn broadcast_rows(self, rows: usize) -> Var<'g> {
        let t = self.graph.value(self.id);
        let n = t.len();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(t.data());
        }
        drop(t);
        let v = Tensor::new(&[rows, n], data).unwrap();
        self.graph.unary(self.id, v, Op::BroadcastRows(self.id))
    }

    /// Multiplies each 3-vector row `i` by `rotations[i]` (or its transpose).
    pub fn rotate_rows(self, rotations: Rc<[RotationMatrix]>, transpose: bool) -> Result<Var<'g>> {
        let t = self.graph.value(self.id);
        let (r, c) = t.dims2();
        if c != 3 || r != rotations.len() {
            return Err(Error::ShapeMismatch {
                op: "rotate_rows",
                lhs: t.shape().to_vec(),
                rhs: alloc::vec![rotations.len(), 3],
            });
        }
        let mut data = Vec::with_capacity(r * 3);
        for (i, rot) in rotations.iter().enumerate() {
            let x = crate::geometry::Vec3::from_array([t.data()[3 * i], t.data()[3 * i + 1], t.data()[3 * i + 2]]);
            let y = if transpose { rot.apply_transpose(x) } else { rot.apply(x) };
            data.extend_from_slice(&y.to_array());
        }
        drop(t);
        let v = Tensor::new(&[r, 3], data)?;
        Ok(self.graph.unary(self.id, v, Op::RotateRows { input: self.id, rotations, transpose }))
    }

    /// Row-wise cross product of two `[n, 3]` tensors.
    pub fn cross_rows(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.graph.value(self.id), self.graph.value(other.id));
        if a.shape() != b.shape() || a.cols() != 3 {
            return Err(mismatch("cross_rows", &a, &b));
        }
        let mut data = Vec::with_capacity(a.len());
        for i in 0..a.rows() {
            let x = crate::geometry::Vec3::from_array([a.get(i, 0), a.get(i, 1), a.get(i, 2)]);
            let y = crate::geometry::Vec3::from_array([b.get(i, 0), b.get(i, 1), b.get(i, 2)]);
            data.extend_from_slice(&x.cross(y).to_array());
        }
        let v = Tensor::new(a.shape(), data)?;
        drop((a, b));
        Ok(self.graph.binary(self.id, other.id, v, Op::CrossRows(self.id, other.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let v = self.graph.value(self.id).clone().reshaped(shape)?;
        Ok(self.graph.unary(self.id, v, Op::Reshape(self.id)))
    }
}
