//! Patch-token transformer that predicts the next garment state.

mod config;
mod encode;
mod params;
mod ret;
mod scene;

use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::SimulatorConfig;
pub use encode::{encode_tokens, TokenEdges, TokenKind, Tokens};
pub use params::{ModelParams, ParamStore, ParamVars};
pub use ret::{
    apply_lift, attention_logit, edge_feature, edge_feature_centered, edge_feature_var, lift_rotation, mat_vec,
    semi_orthogonalize, semi_orthogonalize_var, EdgeFeature, EDGE_FEATURE_FLOOR,
};
pub use scene::{GarmentSetup, StepInput};

use crate::error::{Error, Result};
use crate::geometry::{RotationMatrix, Vec3};
use crate::oracle::DIVERGENCE_LIMIT;
use crate::sequence::Sequence;
use crate::tensor::{Graph, Tensor, Var};

/// Prediction of one step inside a graph.
pub struct StepOutput<'g> {
    /// `[vertices, 3]` positions at `t + 1`.
    pub positions: Var<'g>,
    /// `[vertices, 3]` world-frame accelerations.
    pub accelerations: Var<'g>,
    /// Edge pairs whose feature distance hit the floor, summed over layers.
    pub degenerate_edges: usize,
}

fn vec3_rows(points: &[Vec3]) -> Tensor {
    Tensor::new(&[points.len(), 3], points.iter().flat_map(|p| p.to_array()).collect()).expect("shape")
}

/// Reads a `[n, 3]` tensor back into points.
pub fn rows_to_vec3(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows()).map(|i| Vec3::new(t.get(i, 0), t.get(i, 1), t.get(i, 2))).collect()
}

/// Runs the attention stack over the patch tokens. Returns the hidden states
/// of all tokens (patches first) and the number of floored edge features.
pub fn attend<'g>(
    graph: &'g Graph,
    vars: &ParamVars<'g>,
    config: &SimulatorConfig,
    tokens: &Tokens,
) -> Result<(Var<'g>, usize)> {
    let np = tokens.patch_count;
    let hp0 = vars.linear("enc.patch", graph.constant(tokens.patch_features.clone()))?;
    let mut rest = Vec::new();
    if tokens.body_count > 0 {
        rest.push(vars.linear("enc.body", graph.constant(tokens.body_features.clone()))?);
    }
    rest.push(vars.linear("enc.wind", graph.constant(tokens.wind_features.clone()))?);
    rest.push(vars.linear("enc.gravity", graph.constant(tokens.gravity_features.clone()))?);
    let rest = Var::concat(&rest, 0)?;

    let edges = &tokens.edges;
    let receivers = edges.receivers();
    let senders = edges.senders();
    let n_plain = edges.plain_receivers.len();
    let n_framed = edges.framed_receivers.len();
    let rotations: Rc<[RotationMatrix]> = edges.framed_rotations.clone().into();
    let mut hp = hp0;
    let mut degenerate = 0;
    for l in 0..config.layers {
        let name = |s: &str| alloc::format!("layer{l}.{s}");
        let all = Var::concat(&[hp, rest], 0)?;
        let q = hp.matmul(vars.get(&name("wq")))?;
        let r = hp.matmul(vars.get(&name("wr")))?;
        let s = all.matmul(vars.get(&name("ws")))?;
        let re = r.gather(receivers.clone())?;
        let se = s.gather(senders.clone())?;
        degenerate += re.sub(se)?.l2norm(0.0).with_value(|t| t.data().iter().filter(|d| !(**d >= EDGE_FEATURE_FLOOR)).count());
        let f = edge_feature_var(re, se)?;
        let logits = q.gather(receivers.clone())?.mul(f)?.sum_cols();
        let weights = logits.segment_softmax(receivers.clone())?;
        let mut parts = Vec::with_capacity(2);
        if n_plain > 0 {
            parts.push(f.slice(0, 0, n_plain)?);
        }
        if n_framed > 0 {
            let mut x = f.slice(0, n_plain, n_framed)?;
            let w = if config.rotation_equivalent {
                Some(semi_orthogonalize_var(vars.get(&name("lift")))?)
            } else {
                None
            };
            if let Some(w) = w {
                x = apply_lift(x, w, &rotations, false)?;
            }
            x = vars.mlp(&name("psi"), 2, x)?;
            if let Some(w) = w {
                x = apply_lift(x, w, &rotations, true)?;
            }
            parts.push(x);
        }
        let messages = Var::concat(&parts, 0)?.mul_rows(weights)?;
        hp = hp.add(messages.scatter_add(receivers.clone(), np)?)?;
        hp = hp.add(vars.mlp(&name("ffn"), 2, hp)?)?;
    }
    Ok((Var::concat(&[hp, rest], 0)?, degenerate))
}

/// Maps hidden states back to per-vertex accelerations and integrates them.
pub fn decode<'g>(
    graph: &'g Graph,
    vars: &ParamVars<'g>,
    config: &SimulatorConfig,
    setup: &GarmentSetup,
    tokens: &Tokens,
    hidden: Var<'g>,
    input: &StepInput<'_>,
) -> Result<(Var<'g>, Var<'g>)> {
    let nv = setup.vertex_count();
    let x_now = input.current();
    let x_prev = input.garments[1];
    let centers = setup.patch_centers(x_now);
    let vertex_rot: Vec<RotationMatrix> =
        tokens.vertex_frame_token.iter().map(|&t| tokens.rotation(t as usize)).collect();
    let pair_rot: Rc<[RotationMatrix]> = setup.pair_vertex.iter().map(|&k| vertex_rot[k as usize]).collect();
    let mut rel = Vec::with_capacity(setup.pair_vertex.len());
    for (i, (&k, &p)) in setup.pair_vertex.iter().zip(&setup.pair_patch).enumerate() {
        rel.push(pair_rot[i].apply(x_now[k as usize] - centers[p as usize]) / setup.patch_diameter);
    }
    let pair_body: Rc<[u32]> = setup.pair_vertex.iter().map(|&k| tokens.vertex_frame_token[k as usize]).collect();
    let mut vp = hidden.gather(setup.pair_patch.iter().copied().collect())?;
    let mut vb = hidden.gather(pair_body)?;
    if config.rotation_equivalent {
        let w = semi_orthogonalize_var(vars.get("dec.lift"))?;
        vp = apply_lift(vp, w, &pair_rot, false)?;
        vb = apply_lift(vb, w, &pair_rot, false)?;
    }
    let inputs = Var::concat(&[graph.constant(vec3_rows(&rel)), vp, vb], 1)?;
    let local = vars.mlp("dec.g", 4, inputs)?.scale(config.accel_scale);
    let inv = graph.constant(Tensor::new(&[nv], setup.inv_neighbor_count.clone())?);
    let mut accel = local.scatter_add(setup.pair_vertex.iter().copied().collect(), nv)?.mul_rows(inv)?;
    if config.rotation_equivalent {
        accel = accel.rotate_rows(vertex_rot.into(), true)?;
    }
    let dt = setup.dt;
    let v_now: Vec<Vec3> = x_now.iter().zip(x_prev).map(|(a, b)| (*a - *b) / dt).collect();
    let velocity = accel.scale(dt).add(graph.constant(vec3_rows(&v_now)))?;
    let positions = velocity.scale(dt).add(graph.constant(vec3_rows(x_now)))?;
    Ok((positions, accel))
}

/// Stream for the free axes of canonical frames. It restarts every step, so
/// a token keeps the same random in-plane axis from frame to frame.
pub fn frame_rng(config: &SimulatorConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.seed ^ 0x6672_616d_6573)
}

/// One prediction from `t` to `t + 1` inside `graph`.
pub fn forward_step<'g>(
    graph: &'g Graph,
    vars: &ParamVars<'g>,
    config: &SimulatorConfig,
    setup: &GarmentSetup,
    input: &StepInput<'_>,
) -> Result<StepOutput<'g>> {
    let tokens = encode_tokens(setup, input, config, &mut frame_rng(config))?;
    let (hidden, degenerate_edges) = attend(graph, vars, config, &tokens)?;
    let (positions, accelerations) = decode(graph, vars, config, setup, &tokens, hidden, input)?;
    Ok(StepOutput {
        positions,
        accelerations,
        degenerate_edges,
    })
}

/// Gradient-free single step; returns the predicted positions.
pub fn predict(params: &ModelParams, setup: &GarmentSetup, input: &StepInput<'_>) -> Result<Vec<Vec3>> {
    let graph = Graph::new();
    let vars = ParamVars::new(&graph, &params.store, false);
    let out = forward_step(&graph, &vars, &params.config, setup, input)?;
    Ok(out.positions.with_value(rows_to_vec3))
}

/// Autoregressive rollout result.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Predicted frames `start + 1 ..`, layers concatenated.
    pub frames: Vec<Vec<Vec3>>,
    /// Step at which the prediction left the divergence bound, if any.
    pub diverged_at: Option<usize>,
}

/// Predicts `steps` frames after `start` from ground truth up to `start`.
/// Stops early (and reports it) when a position is non-finite or beyond the
/// divergence bound; the offending frame is not kept.
pub fn rollout(params: &ModelParams, seq: &Sequence, start: usize, steps: usize) -> Result<Rollout> {
    let setup = GarmentSetup::new(seq, &params.config)?;
    let mut track = setup.garment_track(seq);
    if start >= track.len() {
        return Err(Error::MissingHistory {
            needed: start + 1,
            available: track.len(),
        });
    }
    let steps = steps.min(seq.len() - 1 - start);
    track.truncate(start + 1);
    let mut out = Rollout {
        frames: Vec::with_capacity(steps),
        diverged_at: None,
    };
    for step in 0..steps {
        let t = start + step;
        let input = StepInput::from_track(&track, seq, t, params.config.history)?;
        let next = predict(params, &setup, &input)?;
        if next.iter().any(|p| !p.is_finite() || p.max_abs() > DIVERGENCE_LIMIT) {
            out.diverged_at = Some(t + 1);
            break;
        }
        out.frames.push(next.clone());
        track.push(next);
    }
    Ok(out)
}
