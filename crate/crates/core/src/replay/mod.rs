//! Transition storage with prioritized (sum-tree) sampling and n-step
//! return assembly. Contents persist across task switches; nothing in this
//! module can be cleared by the schedule.

mod buffer;
mod nstep;
mod stored;
mod sum_tree;

pub use buffer::{ReplayBuffer, ReplayConfig, SampleBatch};
pub use nstep::{nstep_return, NStepAssembler};
pub use stored::{StoredObs, Transition};
pub use sum_tree::SumTree;
