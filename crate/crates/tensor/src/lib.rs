//! Dense CPU tensors with a small reverse-mode autodiff tape.
//!
//! Everything is generic over [`Scalar`] so that the same network code runs
//! in `f32` for training and in `f64` for finite-difference gradient checks.

mod conv;
mod graph;
mod norm;
mod ops;
mod scalar;
mod tensor;

pub mod check;
pub mod layers;
pub mod optim;
pub mod params;

pub use graph::{BackwardFn, Gradients, Graph, Var};
pub use norm::BatchStats;
pub use ops::softmax_rows;
pub use optim::{Adam, AdamConfig};
pub use params::{Binding, EntryKind, Mode, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
