//! Training losses on predicted vertex positions.

use alloc::rc::Rc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_point, vertex_normals, MeshTopology, Vec3};
use crate::model::{rows_to_vec3, GarmentSetup};
use crate::tensor::{Graph, Tensor, Var};

/// Weights of the loss terms and the collision margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub mse: f64,
    pub normal: f64,
    pub body_collision: f64,
    pub garment_collision: f64,
    /// Collision margin in meters; `None` uses 0.4% of the cloth size.
    pub margin: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mse: 1.0,
            normal: 0.1,
            body_collision: 1.0,
            garment_collision: 1.0,
            margin: None,
        }
    }
}

pub const DEFAULT_MARGIN_RATIO: f64 = 0.004;

impl LossConfig {
    pub fn margin_for(&self, cloth_size: f64) -> f64 {
        self.margin.unwrap_or(DEFAULT_MARGIN_RATIO * cloth_size)
    }
}

/// Scalar values of each term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub normal: f64,
    pub body_collision: f64,
    pub garment_collision: f64,
    pub total: f64,
}

pub(crate) fn points_tensor(points: &[Vec3]) -> Tensor {
    Tensor::new(&[points.len(), 3], points.iter().flat_map(|p| p.to_array()).collect()).expect("shape")
}

fn zero_like<'g>(x: Var<'g>) -> Var<'g> {
    x.scale(0.0).sum()
}

/// Mean squared vertex error plus the same over patch centers.
pub fn loss_mse<'g>(pred: Var<'g>, truth: &[Vec3], setup: &GarmentSetup) -> Result<Var<'g>> {
    let g = pred.graph();
    let target = g.constant(points_tensor(truth));
    let vertex = pred.sub(target)?.square()?.sum().scale(1.0 / truth.len() as f64);
    let centers = patch_centers_var(pred, setup)?;
    let true_centers = g.constant(points_tensor(&setup.patch_centers(truth)));
    let patch = centers.sub(true_centers)?.square()?.sum().scale(1.0 / setup.patch_count() as f64);
    vertex.add(patch)
}

/// Differentiable patch centers of a `[vertices, 3]` position tensor.
pub fn patch_centers_var<'g>(pred: Var<'g>, setup: &GarmentSetup) -> Result<Var<'g>> {
    let np = setup.patch_count();
    let mut count = alloc::vec![0.0; np];
    for &p in &setup.vertex_patch {
        count[p as usize] += 1.0;
    }
    let inv = Tensor::new(&[np], count.iter().map(|c: &f64| 1.0 / c.max(1.0)).collect())?;
    pred.scatter_add(setup.vertex_patch.iter().copied().collect(), np)?
        .mul_rows(pred.graph().constant(inv))
}

/// Area-weighted unit vertex normals of `[n, 3]` positions.
pub fn normals_var<'g>(positions: Var<'g>, topology: &MeshTopology) -> Result<Var<'g>> {
    let n = topology.vertex_count;
    let corner = |k: usize| -> Rc<[u32]> { topology.faces.iter().map(|f| f[k]).collect() };
    let (ia, ib, ic) = (corner(0), corner(1), corner(2));
    let a = positions.gather(ia.clone())?;
    let b = positions.gather(ib.clone())?;
    let c = positions.gather(ic.clone())?;
    let face = b.sub(a)?.cross_rows(c.sub(a)?)?;
    let acc = face
        .scatter_add(ia, n)?
        .add(face.scatter_add(ib, n)?)?
        .add(face.scatter_add(ic, n)?)?;
    acc.div_rows(acc.l2norm(1e-12))
}

/// Squared normal error averaged over vertices of all layers.
pub fn loss_normal<'g>(pred: Var<'g>, truth: &[Vec3], setup: &GarmentSetup) -> Result<Var<'g>> {
    let g = pred.graph();
    let mut parts = Vec::new();
    let mut target = Vec::with_capacity(truth.len());
    for (li, layer) in setup.layers.iter().enumerate() {
        let (v0, v1) = (setup.vertex_offsets[li], setup.vertex_offsets[li + 1]);
        parts.push(normals_var(pred.slice(0, v0, v1 - v0)?, &layer.topology)?);
        target.extend(vertex_normals(&layer.topology, &truth[v0..v1]).normals);
    }
    let normals = Var::concat(&parts, 0)?;
    Ok(normals.sub(g.constant(points_tensor(&target)))?.square()?.sum().scale(1.0 / truth.len() as f64))
}

/// `sum max(margin - (x - x_a) . n_a, 0)^2 / N_c` where `a` is the nearest
/// anchor of each point (held fixed) and `N_c` counts active terms.
fn margin_penalty<'g>(points: Var<'g>, anchors: Var<'g>, normals: Var<'g>, margin: f64) -> Result<Var<'g>> {
    let gap = points.sub(anchors)?.mul(normals)?.sum_cols();
    let hinge = gap.scale(-1.0).add_scalar(margin).relu();
    let active = hinge.with_value(|t| t.data().iter().filter(|v| **v > 0.0).count());
    if active == 0 {
        return Ok(zero_like(points));
    }
    Ok(hinge.square()?.sum().scale(1.0 / active as f64))
}

/// Penalty for vertices closer than `margin` to the body surface, measured
/// along the normal of the nearest body sample.
pub fn loss_body_collision<'g>(
    pred: Var<'g>,
    body: &[Vec3],
    body_normals: &[Vec3],
    margin: f64,
) -> Result<Var<'g>> {
    if body.is_empty() {
        return Ok(zero_like(pred));
    }
    if body.len() != body_normals.len() {
        return Err(Error::LengthMismatch {
            what: "body normals",
            expected: body.len(),
            got: body_normals.len(),
        });
    }
    let g = pred.graph();
    let points = pred.with_value(rows_to_vec3);
    let nearest: Vec<usize> = points.iter().map(|&x| nearest_point(body, x).unwrap()).collect();
    let anchors: Vec<Vec3> = nearest.iter().map(|&j| body[j]).collect();
    let normals: Vec<Vec3> = nearest.iter().map(|&j| body_normals[j]).collect();
    margin_penalty(pred, g.constant(points_tensor(&anchors)), g.constant(points_tensor(&normals)), margin)
}

/// Penalty for outer-layer vertices closer than `margin` to the inner layer.
/// Gradients flow into both layers; the nearest-vertex pairing is fixed.
pub fn loss_garment_collision<'g>(pred: Var<'g>, setup: &GarmentSetup, margin: f64) -> Result<Var<'g>> {
    if setup.layers.len() < 2 {
        return Ok(zero_like(pred));
    }
    let (i0, i1, o1) = (setup.vertex_offsets[0], setup.vertex_offsets[1], setup.vertex_offsets[2]);
    let inner = pred.slice(0, i0, i1 - i0)?;
    let outer = pred.slice(0, i1, o1 - i1)?;
    let inner_pts = inner.with_value(rows_to_vec3);
    let outer_pts = outer.with_value(rows_to_vec3);
    let nearest: Rc<[u32]> = outer_pts
        .iter()
        .map(|&x| nearest_point(&inner_pts, x).unwrap() as u32)
        .collect();
    let normals = normals_var(inner, &setup.layers[0].topology)?;
    margin_penalty(outer, inner.gather(nearest.clone())?, normals.gather(nearest)?, margin)
}

/// Weighted sum of all terms for a prediction of frame `t + 1`.
pub fn total_loss<'g>(
    pred: Var<'g>,
    truth: &[Vec3],
    body: &[Vec3],
    body_normals: &[Vec3],
    setup: &GarmentSetup,
    config: &LossConfig,
    margin: f64,
) -> Result<(Var<'g>, LossBreakdown)> {
    let g: &Graph = pred.graph();
    let mut total = g.constant(Tensor::scalar(0.0));
    let mut out = LossBreakdown::default();
    let terms: [(f64, &mut f64, &dyn Fn() -> Result<Var<'g>>); 4] = [
        (config.mse, &mut out.mse, &|| loss_mse(pred, truth, setup)),
        (config.normal, &mut out.normal, &|| loss_normal(pred, truth, setup)),
        (config.body_collision, &mut out.body_collision, &|| {
            loss_body_collision(pred, body, body_normals, margin)
        }),
        (config.garment_collision, &mut out.garment_collision, &|| loss_garment_collision(pred, setup, margin)),
    ];
    for (weight, slot, term) in terms {
        let v = term()?;
        *slot = v.item();
        if weight != 0.0 {
            total = total.add(v.scale(weight))?;
        }
    }
    out.total = total.item();
    if !out.total.is_finite() {
        return Err(Error::NonFinite(alloc::format!("loss {out:?}")));
    }
    Ok((total, out))
}
