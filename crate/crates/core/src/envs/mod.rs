//! Deterministic toy arcade tasks with parameterized modes, plus the
//! switching schedule that cycles through them without touching any
//! agent-side state.
//!
//! There is deliberately no hook here that could clear weights, optimizer
//! moments, or replay contents: a task switch only swaps which environment
//! the agent is stepping.

mod game;
mod schedule;
mod task;

pub use game::{Env, StepOutcome};
pub use schedule::SwitchSchedule;
pub use task::{EnvSpec, GameKind, ModeParams, Observation, TaskDef};
