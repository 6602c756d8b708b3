//! Token features, interaction edges and canonical frames for one step.

use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::Rng;

use super::scene::{GarmentSetup, StepInput};
use super::SimulatorConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    canonical_frame, nearest_point, vertex_normals, world_space_edges, EdgeKind, EdgeSet, RotationMatrix, Senders,
    Vec3,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Patch,
    Body,
    Wind,
    Gravity,
}

/// Interaction edges split into patch-patch edges (used as is) and edges
/// from body, wind and gravity tokens (interacted in the sender's frame).
#[derive(Debug, Clone, Default)]
pub struct TokenEdges {
    pub plain_receivers: Vec<u32>,
    pub plain_senders: Vec<u32>,
    pub framed_receivers: Vec<u32>,
    pub framed_senders: Vec<u32>,
    pub framed_rotations: Vec<RotationMatrix>,
}

impl TokenEdges {
    pub fn len(&self) -> usize {
        self.plain_receivers.len() + self.framed_receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Receivers in message order: plain edges first.
    pub fn receivers(&self) -> Rc<[u32]> {
        self.plain_receivers.iter().chain(&self.framed_receivers).copied().collect()
    }

    pub fn senders(&self) -> Rc<[u32]> {
        self.plain_senders.iter().chain(&self.framed_senders).copied().collect()
    }
}

/// Encoder inputs for one step.
#[derive(Debug, Clone)]
pub struct Tokens {
    pub kinds: Vec<TokenKind>,
    /// Anchor position of each token; `None` for wind and gravity.
    pub anchors: Vec<Option<Vec3>>,
    /// Canonical frame of each token; `None` for patches.
    pub rotations: Vec<Option<RotationMatrix>>,
    pub patch_features: Tensor,
    pub body_features: Tensor,
    pub wind_features: Tensor,
    pub gravity_features: Tensor,
    pub edges: TokenEdges,
    pub patch_count: usize,
    pub body_count: usize,
    /// Per-vertex token that supplies the decoder frame: nearest body sample, or gravity.
    pub vertex_frame_token: Vec<u32>,
}

impl Tokens {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn wind_index(&self) -> usize {
        self.patch_count + self.body_count
    }

    pub fn gravity_index(&self) -> usize {
        self.wind_index() + 1
    }

    pub fn rotation(&self, token: usize) -> RotationMatrix {
        self.rotations[token].unwrap_or(RotationMatrix::IDENTITY)
    }
}

fn push_vec(out: &mut Vec<f64>, v: Vec3) {
    out.extend_from_slice(&v.to_array());
}

/// Builds tokens and edges. Canonical frames of body samples, wind and
/// gravity draw their free axis from `rng` (identity when `config` turns
/// the frames off).
pub fn encode_tokens<R: Rng + ?Sized>(
    setup: &GarmentSetup,
    input: &StepInput<'_>,
    config: &SimulatorConfig,
    rng: &mut R,
) -> Result<Tokens> {
    let h = config.history;
    if input.garments.len() < h + 2 || input.body.len() < h + 2 {
        return Err(Error::MissingHistory {
            needed: h + 2,
            available: input.garments.len().min(input.body.len()),
        });
    }
    let nv = setup.vertex_count();
    for g in &input.garments[..h + 2] {
        if g.len() != nv {
            return Err(Error::LengthMismatch {
                what: "garment positions",
                expected: nv,
                got: g.len(),
            });
        }
    }
    let dt = setup.dt;
    let np = setup.patch_count();
    let centers: Vec<Vec<Vec3>> = input.garments[..h + 2].iter().map(|g| setup.patch_centers(g)).collect();

    let mut normals = Vec::with_capacity(nv);
    for (li, layer) in setup.layers.iter().enumerate() {
        normals.extend(vertex_normals(&layer.topology, setup.layer_slice(li, input.current())).normals);
    }
    let mut patch_normal = alloc::vec![Vec3::ZERO; np];
    for (n, &p) in normals.iter().zip(&setup.vertex_patch) {
        patch_normal[p as usize] += *n;
    }
    let mut pf = Vec::with_capacity(np * config.patch_feature_len());
    for li in 0..setup.layers.len() {
        let attrs = setup.layers[li].attrs.features();
        for p in setup.patch_offsets[li]..setup.patch_offsets[li + 1] {
            for k in 0..=h {
                push_vec(&mut pf, (centers[k][p] - centers[k + 1][p]) / dt);
            }
            push_vec(&mut pf, patch_normal[p].try_normalize().unwrap_or(Vec3::Z));
            pf.extend_from_slice(&attrs);
        }
    }
    let patch_features = Tensor::new(&[np, config.patch_feature_len()], pf)?;

    let nb = input.body[0].len();
    if input.body.iter().any(|b| b.len() != nb) || input.body_normals.len() != nb {
        return Err(Error::LengthMismatch {
            what: "body samples",
            expected: nb,
            got: input.body_normals.len(),
        });
    }
    let mut bf = Vec::with_capacity(nb * config.body_feature_len());
    for j in 0..nb {
        for k in 0..=h {
            push_vec(&mut bf, (input.body[k][j] - input.body[k + 1][j]) / dt);
        }
        push_vec(&mut bf, input.body_normals[j]);
    }
    let body_features = Tensor::new(&[nb, config.body_feature_len()], bf)?;

    input.wind.validate()?;
    let wind_dir = input.wind.direction().try_normalize().unwrap_or(Vec3::Z);
    let wind_features = Tensor::new(&[1, 4], [wind_dir.to_array().as_slice(), &[input.wind.strength]].concat())?;
    let g_norm = setup.gravity.norm();
    let g_dir = setup.gravity.try_normalize().unwrap_or(-Vec3::Z);
    let gravity_features = Tensor::new(&[1, 4], [g_dir.to_array().as_slice(), &[g_norm / 9.8]].concat())?;

    let frame = |n: Vec3, rng: &mut R| -> Result<Option<RotationMatrix>> {
        if config.rotation_equivalent {
            canonical_frame(n, rng).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut kinds = alloc::vec![TokenKind::Patch; np];
    let mut anchors: Vec<Option<Vec3>> = centers[0].iter().map(|c| Some(*c)).collect();
    let mut rotations: Vec<Option<RotationMatrix>> = alloc::vec![None; np];
    for j in 0..nb {
        kinds.push(TokenKind::Body);
        anchors.push(Some(input.body[0][j]));
        rotations.push(frame(input.body_normals[j], rng)?);
    }
    kinds.extend([TokenKind::Wind, TokenKind::Gravity]);
    anchors.extend([None, None]);
    rotations.push(frame(wind_dir, rng)?);
    rotations.push(frame(g_dir, rng)?);

    let world = world_space_edges(&centers[0], Senders::Same, setup.patch_radius, &setup.mesh_edges, EdgeKind::World);
    let patch_edges = setup.mesh_edges.union(&world);
    let mut edges = TokenEdges::default();
    for (r, s) in patch_edges.pairs() {
        edges.plain_receivers.push(r);
        edges.plain_senders.push(s);
    }
    let identity = RotationMatrix::IDENTITY;
    if nb > 0 {
        let body_edges =
            world_space_edges(&centers[0], Senders::Other(input.body[0]), setup.body_radius, &EdgeSet::new(), EdgeKind::Body);
        for (r, s) in body_edges.pairs() {
            let token = np + s as usize;
            edges.framed_receivers.push(r);
            edges.framed_senders.push(token as u32);
            edges.framed_rotations.push(rotations[token].unwrap_or(identity));
        }
    }
    for token in [np + nb, np + nb + 1] {
        for p in 0..np as u32 {
            edges.framed_receivers.push(p);
            edges.framed_senders.push(token as u32);
            edges.framed_rotations.push(rotations[token].unwrap_or(identity));
        }
    }

    let body_now = input.body_now();
    let vertex_frame_token = input
        .current()
        .iter()
        .map(|&x| match nearest_point(body_now, x) {
            Some(j) => (np + j) as u32,
            None => (np + nb + 1) as u32,
        })
        .collect();

    Ok(Tokens {
        kinds,
        anchors,
        rotations,
        patch_features,
        body_features,
        wind_features,
        gravity_features,
        edges,
        patch_count: np,
        body_count: nb,
        vertex_frame_token,
    })
}
