//! Rollout error and collision statistics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{nearest_point, vertex_normals, MeshTopology, Vec3};
use crate::model::{rollout, ModelParams};
use crate::sequence::Sequence;
use crate::train::DEFAULT_MARGIN_RATIO;

/// Inner-layer vertices further than this many margins are not in contact.
pub const GARMENT_CONTACT_RADIUS: f64 = 3.0;

/// Mean vertex distance between two frames.
pub fn euclidean_error(pred: &[Vec3], truth: &[Vec3]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "frame sizes differ");
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).map(|(a, b)| a.distance(*b)).sum::<f64>() / pred.len() as f64
}

/// Fraction of vertices behind the body surface, judged against the
/// nearest body sample and its normal.
pub fn collision_rate_body(pred: &[Vec3], body: &[Vec3], body_normals: &[Vec3]) -> f64 {
    if pred.is_empty() || body.is_empty() {
        return 0.0;
    }
    let inside = pred
        .iter()
        .filter(|&&x| {
            let j = nearest_point(body, x).unwrap();
            (x - body[j]).dot(body_normals[j]) < 0.0
        })
        .count();
    inside as f64 / pred.len() as f64
}

/// Fraction of outer vertices behind the inner surface: the nearest inner
/// vertex lies within `radius` and the offset along its normal is negative.
pub fn collision_rate_garment(inner: &[Vec3], inner_topology: &MeshTopology, outer: &[Vec3], radius: f64) -> f64 {
    if outer.is_empty() || inner.is_empty() {
        return 0.0;
    }
    let normals = vertex_normals(inner_topology, inner).normals;
    let inside = outer
        .iter()
        .filter(|&&x| {
            let j = nearest_point(inner, x).unwrap();
            x.distance(inner[j]) < radius && (x - inner[j]).dot(normals[j]) < 0.0
        })
        .count();
    inside as f64 / outer.len() as f64
}

/// Averages over the frames of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence_id: usize,
    pub euclid_err_m: f64,
    pub coll_body_pct: f64,
    pub coll_garment_pct: f64,
    pub frames: usize,
    pub diverged_at: Option<usize>,
}

/// Statistics of predicted frames `start + 1 ..` against the sequence.
pub fn score_frames(seq: &Sequence, start: usize, frames: &[Vec<Vec3>], sequence_id: usize) -> EvalReport {
    let counts = seq.vertex_counts();
    let radius = GARMENT_CONTACT_RADIUS * DEFAULT_MARGIN_RATIO * seq.cloth_size;
    let (mut err, mut body, mut garment) = (0.0, 0.0, 0.0);
    for (k, pred) in frames.iter().enumerate() {
        let f = &seq.frames[start + 1 + k];
        err += euclidean_error(pred, &f.garments.concat());
        body += collision_rate_body(pred, &f.body_positions, &f.body_normals);
        if counts.len() >= 2 {
            let (inner, rest) = pred.split_at(counts[0]);
            garment += collision_rate_garment(inner, &seq.layers[0].topology, &rest[..counts[1]], radius);
        }
    }
    let n = frames.len().max(1) as f64;
    EvalReport {
        sequence_id,
        euclid_err_m: err / n,
        coll_body_pct: 100.0 * body / n,
        coll_garment_pct: 100.0 * garment / n,
        frames: frames.len(),
        diverged_at: None,
    }
}

/// Rolls out from the first frame with full history to the end of the
/// sequence and scores the prediction.
pub fn evaluate_sequence(params: &ModelParams, seq: &Sequence, sequence_id: usize) -> Result<EvalReport> {
    let start = params.config.history.min(seq.len().saturating_sub(1));
    let r = rollout(params, seq, start, seq.len())?;
    let mut report = score_frames(seq, start, &r.frames, sequence_id);
    report.diverged_at = r.diverged_at;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate_sequence, SceneConfig};

    #[test]
    fn euclidean_hand_value() {
        let a = [Vec3::ZERO, Vec3::X];
        let b = [Vec3::new(0.0, 3.0, 4.0), Vec3::X];
        assert_eq!(euclidean_error(&a, &b), 2.5);
    }

    #[test]
    fn body_rate_counts_points_behind_samples() {
        let body = [Vec3::ZERO];
        let normals = [Vec3::Z];
        let pts = [Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.0, 0.0, 0.1), Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.0, 0.0, -1.0)];
        assert_eq!(collision_rate_body(&pts, &body, &normals), 0.5);
    }

    #[test]
    fn ground_truth_is_collision_free() {
        let seq = generate_sequence(&SceneConfig {
            frames: 12,
            ..SceneConfig::default()
        })
        .unwrap();
        let frames: Vec<Vec<Vec3>> = seq.frames[1..].iter().map(|f| f.garments.concat()).collect();
        let r = score_frames(&seq, 0, &frames, 0);
        assert_eq!(r.euclid_err_m, 0.0);
        assert_eq!(r.coll_garment_pct, 0.0);
        // Sampled surface approximates the capsule; allow a small share.
        assert!(r.coll_body_pct < 5.0, "{}", r.coll_body_pct);
    }

    #[test]
    fn interpenetrated_layers_are_detected() {
        let seq = generate_sequence(&SceneConfig {
            frames: 2,
            ..SceneConfig::default()
        })
        .unwrap();
        let inner = &seq.frames[0].garments[0];
        let sunk: Vec<Vec3> = inner.iter().map(|p| *p - Vec3::Z * 0.003).collect();
        let rate = collision_rate_garment(inner, &seq.layers[0].topology, &sunk, 0.05);
        assert_eq!(rate, 1.0);
    }
}
