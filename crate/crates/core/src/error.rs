use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("zero-length normal")]
    ZeroNormal,
    #[error("mesh has no UV coordinates")]
    MissingUv,
    #[error("invalid patch size {0}")]
    InvalidPatchSize(usize),
    #[error("patch {0} has no vertices")]
    EmptyPatch(usize),
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("lift matrix is rank deficient (column {column} norm {norm:e})")]
    RankDeficient { column: usize, norm: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("history too short: need frame {needed}, sequence has {available}")]
    MissingHistory { needed: usize, available: usize },
    #[error("divergence at frame {frame}: |x| = {magnitude:e}")]
    Divergence { frame: usize, magnitude: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
