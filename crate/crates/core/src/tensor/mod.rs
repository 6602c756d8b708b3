//! Dense f64 tensors with a small reverse-mode differentiation engine.

mod gradcheck;
mod graph;
mod value;

#[cfg(test)]
mod tests;

pub use gradcheck::{gradcheck, gradcheck_inputs, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use value::Tensor;
