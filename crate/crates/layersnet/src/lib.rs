//! IO, configuration and command-line support around `layersnet-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod lseq;
pub mod obj;
pub mod threads;
pub mod verify;

pub use error::{Error, Result};
