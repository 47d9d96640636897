//! Minimal dense-tensor plumbing shared by the encoder and the heads:
//! named f64 tensors, a gradient accumulator keyed by tensor name, and
//! the handful of ops the model needs with hand-written backward passes.

pub mod ops;
pub mod tensor;

pub use tensor::{GradStore, Tensor};
