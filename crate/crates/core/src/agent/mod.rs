//! DQN-family learner: network construction under ReLU/CReLU width
//! policies, epsilon-greedy action selection, n-step TD targets against a
//! periodically synced target network, and prioritized-replay-weighted
//! updates.

mod batch;
mod config;
mod dqn;
mod network;

pub use batch::Batch;
pub use config::{Activation, AgentConfig, ConvSpec, LossKind, QNetworkConfig, WidthPolicy};
pub use dqn::{DqnAgent, LearnReport, LearnTrace, SiteActivations};
pub use network::{build_network, LayerInfo, QNetwork, SiteInfo};
