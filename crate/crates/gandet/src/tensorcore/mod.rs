//! Deterministic differentiable compute core.
//!
//! Dense row-major f64 tensors, the handful of layer operations the
//! detector needs, a per-forward-pass computation record with reverse-mode
//! gradients, and a finite-difference gradient verifier. Everything is
//! 64-bit and accumulates in fixed index order, so results are bit-stable.

mod fdcheck;
mod graph;
mod rng;
mod tensor;

pub use fdcheck::finite_difference_check;
pub use graph::{Gradients, Graph, Var};
pub use rng::RngStream;
pub use tensor::{Parameter, Tensor};
