//! Learner configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Crelu,
}

/// How a CReLU network's widths relate to the ReLU baseline.
///
/// InvariantInput keeps every pre-activation width equal to the baseline,
/// so concatenation doubles the fan-in (and the weight count) of every
/// layer except the first. InvariantOutput keeps every post-activation
/// width equal to the baseline, halving every layer except the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthPolicy {
    InvariantInput,
    InvariantOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Huber,
    Squared,
}

/// Architecture choice. Baseline widths are quoted for the ReLU network;
/// the width policy derives the CReLU variant's actual shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QNetworkConfig {
    pub activation: Activation,
    pub width_policy: WidthPolicy,
    pub dueling: bool,
    pub conv: Vec<ConvSpec>,
    /// Hidden width per stream (baseline).
    pub hidden: usize,
}

impl Default for QNetworkConfig {
    fn default() -> Self {
        QNetworkConfig {
            activation: Activation::Relu,
            width_policy: WidthPolicy::InvariantInput,
            dueling: true,
            // Chosen so every grid cell stays inside the receptive field:
            // on 10x10, 4x4/s2 windows end flush at the walls, and the
            // 2x2/s1 layer covers its whole 4x4 input.
            conv: vec![
                ConvSpec { channels: 6, kernel: 4, stride: 2 },
                ConvSpec { channels: 8, kernel: 2, stride: 1 },
            ],
            hidden: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub network: QNetworkConfig,
    pub gamma: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Learn steps between full target-network copies.
    pub target_sync_period: u64,
    /// Environment frames between learn steps.
    pub learn_every: u64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub huber_delta: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which epsilon anneals linearly.
    pub epsilon_anneal_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            network: QNetworkConfig::default(),
            gamma: 0.99,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            target_sync_period: 1_000,
            learn_every: 4,
            batch_size: 32,
            loss: LossKind::Huber,
            huber_delta: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_fraction: 0.1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.learn_every == 0 || self.target_sync_period == 0 {
            return Err(Error::config(
                "batch_size, learn_every, and target_sync_period must be positive",
            ));
        }
        if self.huber_delta <= 0.0 {
            return Err(Error::config("huber_delta must be positive"));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config("epsilon bounds must be in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_anneal_fraction) {
            return Err(Error::config("epsilon_anneal_fraction must be in [0, 1]"));
        }
        if self.network.hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        Ok(())
    }

    /// Linear anneal from start to end over the first anneal-fraction of
    /// the run, then constant.
    pub fn epsilon_at(&self, frame: u64, total_frames: u64) -> f64 {
        let anneal = (total_frames as f64 * self.epsilon_anneal_fraction).max(1.0);
        let t = frame as f64 / anneal;
        if t >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}
