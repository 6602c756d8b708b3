//! Wavefront OBJ export of one frame.

use std::fmt::Write as _;

use layersnet_core::sequence::Sequence;

use crate::error::{Error, Result};

/// `v` records for every layer in order, then `f` records with 1-based
/// indices offset past the preceding layers.
pub fn frame_to_obj(seq: &Sequence, frame: usize) -> Result<String> {
    let f = seq
        .frames
        .get(frame)
        .ok_or_else(|| Error::Usage(format!("frame {frame} out of range (sequence has {})", seq.len())))?;
    let mut out = String::new();
    for g in &f.garments {
        for p in g {
            writeln!(out, "v {} {} {}", p.x, p.y, p.z).unwrap();
        }
    }
    let mut base = 1u64;
    for layer in &seq.layers {
        for face in &layer.topology.faces {
            let [a, b, c] = face.map(|i| base + i as u64);
            writeln!(out, "f {a} {b} {c}").unwrap();
        }
        base += layer.topology.vertex_count as u64;
    }
    Ok(out)
}
