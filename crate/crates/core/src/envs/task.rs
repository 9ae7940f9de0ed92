//! Task definitions: base game specs, mode parameters, observations.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

/// The three base games. All share a falling-object grid world with a
/// paddle on the bottom row; they differ in object motion and reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    /// Ball falls one row per step; reward +1 if the paddle is under it
    /// when it reaches the bottom row, -1 otherwise.
    Catch,
    /// Same dynamics as Catch with the reward negated: dodge the ball.
    Avoid,
    /// The target sits still on the top row; reach its column for +1
    /// within the step budget, else -1.
    Seek,
}

/// Base task definition, before mode transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub id: String,
    pub game: GameKind,
    #[serde(default = "default_grid")]
    pub height: usize,
    #[serde(default = "default_grid")]
    pub width: usize,
    /// Grid planes per frame (object plane + paddle plane).
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Consecutive frames stacked into one observation.
    #[serde(default = "default_stack")]
    pub frame_stack: usize,
    #[serde(default = "default_cap")]
    pub episode_cap: usize,
    #[serde(default = "default_scale")]
    pub reward_scale: f64,
}

fn default_grid() -> usize {
    10
}
fn default_channels() -> usize {
    2
}
fn default_stack() -> usize {
    2
}
fn default_cap() -> usize {
    500
}
fn default_scale() -> f64 {
    1.0
}

impl EnvSpec {
    pub fn new(id: impl Into<String>, game: GameKind) -> Self {
        EnvSpec {
            id: id.into(),
            game,
            height: default_grid(),
            width: default_grid(),
            channels: default_channels(),
            frame_stack: default_stack(),
            episode_cap: default_cap(),
            reward_scale: default_scale(),
        }
    }

    /// Movement actions shared by every game: left, stay, right.
    pub const BASE_ACTIONS: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if self.height < 3 || self.width < 3 {
            return Err(Error::config(format!(
                "task {}: grid must be at least 3x3, got {}x{}",
                self.id, self.height, self.width
            )));
        }
        if self.channels != 2 {
            return Err(Error::config(format!(
                "task {}: only 2-plane frames are supported",
                self.id
            )));
        }
        if self.frame_stack == 0 || self.episode_cap == 0 {
            return Err(Error::config(format!(
                "task {}: frame_stack and episode_cap must be positive",
                self.id
            )));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::config(format!(
                "task {}: reward_scale must be positive",
                self.id
            )));
        }
        Ok(())
    }
}

/// Non-stationarity knobs applied on top of a base game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeParams {
    /// Swap the effect of the left/right actions.
    pub flip_controls: bool,
    /// Observation cells become 1 - value.
    pub invert_obs: bool,
    /// Extra action ids appended after the base three: grab (hold position,
    /// widened catch window on landing), then release (hold position).
    pub extra_actions: usize,
    /// Sideways cells the ball moves per step, reflecting off walls.
    pub drift: i64,
    /// Reward multiplier, composed with the spec's base scale.
    pub reward_scale: f64,
}

impl Default for ModeParams {
    fn default() -> Self {
        ModeParams {
            flip_controls: false,
            invert_obs: false,
            extra_actions: 0,
            drift: 0,
            reward_scale: 1.0,
        }
    }
}

/// Resolved movement of one action after mode mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseAction {
    Move(i64),
    Grab,
    Release,
}

impl ModeParams {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.extra_actions > 2 {
            return Err(Error::config("extra_actions is at most 2 (grab, release)"));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::config("mode reward_scale must be positive"));
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        EnvSpec::BASE_ACTIONS + self.extra_actions
    }

    /// Map an action id to its base semantics under this mode.
    pub fn map_action(&self, action: usize) -> Result<BaseAction> {
        let n = self.action_count();
        if action >= n {
            return Err(Error::usage(format!(
                "action {action} out of range; the action set is 0..{n}"
            )));
        }
        Ok(match action {
            0 | 2 => {
                let dir = if action == 0 { -1 } else { 1 };
                BaseAction::Move(if self.flip_controls { -dir } else { dir })
            }
            1 => BaseAction::Move(0),
            3 => BaseAction::Grab,
            _ => BaseAction::Release,
        })
    }

    /// In-place observation transform; the identity mode is a strict no-op.
    pub fn transform_obs(&self, frame: &mut [f64]) {
        if self.invert_obs {
            for v in frame.iter_mut() {
                *v = 1.0 - *v;
            }
        }
    }

    pub fn transform_reward(&self, reward: f64) -> f64 {
        if self.reward_scale == 1.0 {
            reward
        } else {
            reward * self.reward_scale
        }
    }
}

/// One schedule entry: a base game plus its mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDef {
    pub spec: EnvSpec,
    pub mode: ModeParams,
}

impl TaskDef {
    pub fn new(spec: EnvSpec, mode: ModeParams) -> Self {
        TaskDef { spec, mode }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.mode.validate()
    }

    pub fn action_count(&self) -> usize {
        self.mode.action_count()
    }

    /// Observation shape as (stacked channels, height, width).
    pub fn obs_shape(&self) -> (usize, usize, usize) {
        (
            self.spec.frame_stack * self.spec.channels,
            self.spec.height,
            self.spec.width,
        )
    }
}

/// Stacked frames presented to the agent. Carries no task or mode
/// identifier: the agent is task-blind.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major [channels, height, width], values in [0, 1].
    pub data: Vec<f64>,
}

impl Observation {
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.channels, self.height, self.width],
            data: self.data.clone(),
        }
    }

    /// Tensor with a leading batch dimension of one.
    pub fn to_batch_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![1, self.channels, self.height, self.width],
            data: self.data.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mode_is_noop() {
        let mode = ModeParams::identity();
        assert!(mode.is_identity());
        let mut frame = vec![0.0, 1.0, 0.0];
        let orig = frame.clone();
        mode.transform_obs(&mut frame);
        assert_eq!(frame, orig);
        assert_eq!(mode.transform_reward(-1.0).to_bits(), (-1.0f64).to_bits());
        assert_eq!(mode.map_action(0).unwrap(), BaseAction::Move(-1));
        assert_eq!(mode.map_action(2).unwrap(), BaseAction::Move(1));
    }

    #[test]
    fn extra_actions_grow_action_set() {
        let mode = ModeParams { extra_actions: 2, ..Default::default() };
        assert_eq!(mode.action_count(), 5);
        assert_eq!(mode.map_action(3).unwrap(), BaseAction::Grab);
        assert_eq!(mode.map_action(4).unwrap(), BaseAction::Release);
    }

    #[test]
    fn reward_scale_applies() {
        let mode = ModeParams { reward_scale: 0.5, ..Default::default() };
        assert_eq!(mode.transform_reward(-1.0), -0.5);
    }

    #[test]
    fn flip_controls_swaps_direction() {
        let mode = ModeParams { flip_controls: true, ..Default::default() };
        assert_eq!(mode.map_action(0).unwrap(), BaseAction::Move(1));
        assert_eq!(mode.map_action(2).unwrap(), BaseAction::Move(-1));
        assert_eq!(mode.map_action(1).unwrap(), BaseAction::Move(0));
    }

    #[test]
    fn out_of_range_action_names_action_set() {
        let mode = ModeParams::identity();
        let err = mode.map_action(3).unwrap_err();
        assert!(err.to_string().contains("0..3"), "{err}");
    }
}
