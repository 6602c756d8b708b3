//! Binary sequence files: `LSEQ`, version, JSON header, then f32 frames.
//!
//! Frame layout: garment positions (inner layer first), body sample
//! positions, body sample normals, wind `(w, x, y, z, strength)`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use layersnet_core::geometry::{patchify, GarmentAttributes, MeshTopology, Quaternion, Vec3};
use layersnet_core::oracle::{BodyCollider, WindState};
use layersnet_core::sequence::{Frame, GarmentLayer, Sequence};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};

pub const MAGIC: &[u8; 4] = b"LSEQ";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerHeader {
    pub vertex_count: usize,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Option<Vec<[f64; 2]>>,
    pub attributes: GarmentAttributes,
    /// Member vertices of each patch.
    pub patches: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub layers: Vec<LayerHeader>,
    pub patch_size: usize,
    pub dt: f64,
    pub gravity: Vec3,
    pub collider: Option<BodyCollider>,
    pub cloth_size: f64,
    pub frame_count: usize,
    pub body_sample_count: usize,
    pub seed: u64,
}

impl Header {
    fn frame_floats(&self) -> usize {
        let verts: usize = self.layers.iter().map(|l| l.vertex_count).sum();
        3 * verts + 6 * self.body_sample_count + 5
    }
}

/// Header describing `seq`.
pub fn header_of(seq: &Sequence) -> Result<Header> {
    let maps = seq.patch_maps()?;
    Ok(Header {
        layers: seq
            .layers
            .iter()
            .zip(maps)
            .map(|(l, m)| LayerHeader {
                vertex_count: l.topology.vertex_count,
                faces: l.topology.faces.clone(),
                uvs: l.topology.uvs.clone(),
                attributes: l.attrs,
                patches: m.members,
            })
            .collect(),
        patch_size: seq.patch_size,
        dt: seq.dt,
        gravity: seq.gravity,
        collider: seq.collider.clone(),
        cloth_size: seq.cloth_size,
        frame_count: seq.len(),
        body_sample_count: seq.body_sample_count(),
        seed: seq.seed,
    })
}

fn put_vec3s(out: &mut Vec<u8>, pts: &[Vec3]) {
    for p in pts {
        for c in p.to_array() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
}

/// Serializes `seq`.
pub fn encode(seq: &Sequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let header = header_of(seq)?;
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * header.frame_floats() * seq.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for f in &seq.frames {
        for g in &f.garments {
            put_vec3s(&mut out, g);
        }
        put_vec3s(&mut out, &f.body_positions);
        put_vec3s(&mut out, &f.body_normals);
        for c in f.wind.to_array() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err(format!("truncated {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4, "frame data")?.try_into().unwrap()) as f64)
    }

    fn vec3s(&mut self, n: usize) -> Result<Vec<Vec3>> {
        (0..n).map(|_| Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))).collect()
    }
}

/// Parses a sequence; rejects bad magic, versions, trailing bytes and
/// patch maps that disagree with the UV layout.
pub fn decode(bytes: &[u8]) -> Result<Sequence> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(format_err("not an LSEQ file"));
    }
    let version = u32::from_le_bytes(c.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported LSEQ version {version}")));
    }
    let len = u64::from_le_bytes(c.take(8, "header length")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| format_err("header too large"))?;
    let header: Header = serde_json::from_slice(c.take(len, "header")?)?;
    let mut layers = Vec::new();
    for (li, l) in header.layers.iter().enumerate() {
        let topology = MeshTopology::new(l.vertex_count, l.faces.clone(), l.uvs.clone())?;
        let map = patchify(&topology, header.patch_size)?;
        if map.members != l.patches {
            return Err(format_err(format!("patch map of layer {li} does not match its UV grid")));
        }
        l.attributes.validate()?;
        layers.push(GarmentLayer {
            topology: Arc::new(topology),
            attrs: l.attributes,
        });
    }
    let expected = header.frame_floats().checked_mul(4 * header.frame_count);
    if expected != Some(bytes.len() - c.at) {
        return Err(format_err(format!(
            "frame data holds {} bytes, header implies {:?}",
            bytes.len() - c.at,
            expected
        )));
    }
    let nb = header.body_sample_count;
    let mut frames = Vec::with_capacity(header.frame_count);
    for _ in 0..header.frame_count {
        let garments = header.layers.iter().map(|l| c.vec3s(l.vertex_count)).collect::<Result<_>>()?;
        let body_positions = c.vec3s(nb)?;
        let body_normals = c.vec3s(nb)?;
        let q = Quaternion::new(c.f32()?, c.f32()?, c.f32()?, c.f32()?);
        let strength = c.f32()?;
        // f32 storage perturbs the unit norm slightly.
        let q = q.normalized().ok_or_else(|| format_err("zero wind quaternion"))?;
        frames.push(Frame {
            garments,
            body_positions,
            body_normals,
            wind: WindState::new(q, strength)?,
        });
    }
    let seq = Sequence {
        layers,
        patch_size: header.patch_size,
        dt: header.dt,
        gravity: header.gravity,
        collider: header.collider,
        cloth_size: header.cloth_size,
        seed: header.seed,
        frames,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn write(path: &Path, seq: &Sequence) -> Result<()> {
    let bytes = encode(seq)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Sequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// `.lseq` files of a directory in name order.
pub fn list_dir(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "lseq"))
        .collect();
    files.sort();
    Ok(files)
}
