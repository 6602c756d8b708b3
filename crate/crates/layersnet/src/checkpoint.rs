//! Parameter files: `LNPK`, version, JSON header, raw little-endian f64 tensors.

use std::path::Path;

use layersnet_core::model::{ModelParams, ParamStore, SimulatorConfig};
use layersnet_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};

pub const MAGIC: &[u8; 4] = b"LNPK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the tensor data.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub config: SimulatorConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(params: &ModelParams) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (name, t) in params.store.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += 8 * t.len() as u64;
    }
    let json = serde_json::to_vec(&Header {
        config: params.config.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(format_err("not an LNPK file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported LNPK version {version}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| format_err("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    let data = &bytes[16 + len..];
    let mut store = ParamStore::new();
    let mut expected_end = 0usize;
    for e in &header.tensors {
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let raw = data
            .get(start..start + 8 * count)
            .ok_or_else(|| format_err(format!("tensor {} lies outside the file", e.name)))?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.insert(e.name.clone(), Tensor::new(&e.shape, values)?);
        expected_end = expected_end.max(start + 8 * count);
    }
    if expected_end != data.len() {
        return Err(format_err("trailing bytes after tensor data"));
    }
    Ok(ModelParams::from_parts(header.config, store)?)
}

pub fn write(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ModelParams> {
    decode(&std::fs::read(path)?)
}
