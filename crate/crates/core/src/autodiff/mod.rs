//! Minimal reverse-mode automatic differentiation over batched `f64`
//! matrices: tape, dense and GRU layers, reparameterised sampling, Adam
//! and gradient-norm clipping.
//!
//! A [`Graph`] is built per update, borrowing the [`ParamStore`]. Calling
//! [`Graph::backward`] yields [`Gradients`] which an [`Adam`] group then
//! applies to the store. Every recorded value is checked for finiteness.

mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{sigmoid, Graph, GraphError, Result, Var};
pub use layers::{reparam_sample, reparam_with_noise, softmax, Dense, GruCell};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

/// Scales `grads` over `ids` to a joint L2 norm of at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut Gradients, ids: &[ParamId], max_norm: f64) -> f64 {
    grads.clip_norm(ids, max_norm)
}
