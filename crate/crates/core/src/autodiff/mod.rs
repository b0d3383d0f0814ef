//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation of a forward pass in creation order.
//! Parameters live outside the graph as [`Tensor`]s; they are bound as leaves
//! for one pass and their gradients are pulled back out after `backward`.

mod gradcheck;
mod graph;
mod mlp;
mod sparse;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, RELATIVE_FLOOR};
pub use graph::{Graph, OpKind, Var};
pub use mlp::{forward_var as mlp_forward_var, mlp_forward, Activation, Linear, MlpParams, MlpSpec};
pub use sparse::CsrMatrix;
pub use tensor::Tensor;
