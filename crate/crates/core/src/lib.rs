// Kernels index several buffers in lockstep.
#![allow(clippy::needless_range_loop)]

pub mod asr;
pub mod attack;
pub mod checkpoint;
pub mod corpus;
pub mod defense;
pub mod denoiser;
mod error;
pub mod seed;
pub mod signal;
pub mod tensor;
pub mod wer;

pub use error::{Error, Result};
