//! Continual deep reinforcement learning laboratory.
//!
//! A single agent cycles through a fixed sequence of toy arcade tasks without
//! ever resetting its weights, optimizer state, or replay buffer, while probes
//! measure how its weights, gradients, and activations evolve across visits.
//! The crate provides the tensor/autodiff engine (`numerics`), the task suite
//! and switching schedule (`envs`), prioritized n-step replay (`replay`), the
//! DQN-family learner with ReLU/CReLU networks (`agent`), the plasticity
//! probe suite (`diagnostics`), and experiment orchestration (`harness`).

pub mod agent;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod replay;
pub mod util;

pub use error::{Error, Result};
