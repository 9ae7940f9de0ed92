//! Deterministic f64 tensor math with reverse-mode differentiation.
//!
//! Just enough machinery for small convolutional + dense Q-networks: a flat
//! row-major [`Tensor`], a [`Tape`] that records forward operations and
//! replays them in reverse, the Adam optimizer, and a binary checkpoint
//! container. Everything is 64-bit: the diagnostics count exact zeros, and
//! wider precision keeps spurious underflow zeros out of those counts.

mod adam;
mod checkpoint;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use params::ParamStore;
pub use tape::{BufId, ConvGeom, Tape};
pub use tensor::{crelu, relu, Tensor};

pub(crate) use tape::{conv2d_forward, conv_use_sparse, matmul_kernel};
