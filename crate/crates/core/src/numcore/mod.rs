//! Dense tensors, reverse-mode gradients, initialization, AdamW, checkpoints
//! and a finite-difference gradient checker.

pub mod adamw;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use init::glorot_init;
pub use params::Params;
pub use rng::SplitMix64;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
