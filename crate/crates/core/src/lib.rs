//! Patch-particle garment simulation with rotation-equivalent attention.
//!
//! The crate is `no_std` with `alloc`. It contains the geometric primitives,
//! a classical two-layer cloth simulator used to produce ground truth, a
//! small reverse-mode differentiation engine, the learned simulator, its
//! training losses and the evaluation metrics. File formats, configuration
//! and the command line live in the `layersnet` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
pub mod oracle;
pub mod sequence;
pub mod tensor;
pub mod train;
