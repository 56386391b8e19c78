//! Dense `f64` tensors with a reverse-mode tape.
//!
//! Operations are methods on [`Tape`] that record their inputs and return a
//! [`Var`]. Model parameters enter as leaves, data as constants, and a single
//! [`Tape::backward`] call yields [`Gradients`] for every leaf the loss
//! depends on.

mod gradcheck;
mod nn;
mod tape;
mod tensor;


pub use gradcheck::{check_gradients, check_gradients_perturbed, relative_error, GradCheckReport};
pub use nn::{ffn, linear, multi_head_attention, norm, AttentionParams, FfnParams, NormParams, NORM_EPS};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
