//! Minimal dense-tensor math with a reverse-mode tape.
//!
//! Everything here works on single images laid out channel-first (`[C, H, W]`).
//! Batches are handled by the caller, which runs one tape per sample and
//! accumulates parameter gradients before taking an optimizer step.
//!
//! Computations are generic over [`Scalar`]; `f32` is the working precision and
//! `f64` exists for finite-difference gradient checks.

mod adam;
mod conv;
mod error;
mod scalar;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d_output_size, Conv2dSpec};
pub use error::AutodiffError;
pub use scalar::Scalar;
pub use tape::{Tape, Var, PROB_FLOOR};
pub use tensor::Tensor;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;
