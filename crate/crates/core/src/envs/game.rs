//! Grid-world dynamics shared by the three games.

use super::task::{BaseAction, GameKind, Observation, TaskDef};
use crate::error::Result;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub terminal: bool,
}

/// One live environment. All state is confined to the instance; resets
/// are a pure function of the seed.
#[derive(Debug, Clone)]
pub struct Env {
    task: TaskDef,
    ball_row: i64,
    ball_col: i64,
    paddle_col: i64,
    steps: usize,
    frames: VecDeque<Vec<f64>>,
}

impl Env {
    pub fn new(task: TaskDef) -> Result<Self> {
        task.validate()?;
        Ok(Env {
            task,
            ball_row: 0,
            ball_col: 0,
            paddle_col: 0,
            steps: 0,
            frames: VecDeque::new(),
        })
    }

    pub fn task(&self) -> &TaskDef {
        &self.task
    }

    pub fn action_count(&self) -> usize {
        self.task.action_count()
    }

    /// Start a new episode: ball on the top row at a seeded column, paddle
    /// centered, step counter zero.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.task.spec.width as i64;
        self.ball_row = 0;
        self.ball_col = rng.gen_range(0..w);
        self.paddle_col = w / 2;
        self.steps = 0;
        let frame = self.render_frame();
        self.frames.clear();
        for _ in 0..self.task.spec.frame_stack {
            self.frames.push_back(frame.clone());
        }
        self.observation()
    }

    /// One deterministic transition under the task's mode.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let base = self.task.mode.map_action(action)?;
        let spec = &self.task.spec;
        let (h, w) = (spec.height as i64, spec.width as i64);

        match base {
            BaseAction::Move(d) => {
                self.paddle_col = (self.paddle_col + d).clamp(0, w - 1);
            }
            BaseAction::Grab | BaseAction::Release => {}
        }

        let mut reward = 0.0;
        let mut terminal = false;
        match spec.game {
            GameKind::Catch | GameKind::Avoid => {
                self.ball_row += 1;
                self.ball_col = reflect(self.ball_col + self.task.mode.drift, w);
                if self.ball_row >= h - 1 {
                    let window = if base == BaseAction::Grab { 1 } else { 0 };
                    let overlap = (self.ball_col - self.paddle_col).abs() <= window;
                    let caught = if overlap { 1.0 } else { -1.0 };
                    reward = match spec.game {
                        GameKind::Catch => caught,
                        _ => -caught,
                    };
                    terminal = true;
                }
            }
            GameKind::Seek => {
                if self.paddle_col == self.ball_col {
                    reward = 1.0;
                    terminal = true;
                } else if self.steps + 1 >= 4 * spec.width {
                    reward = -1.0;
                    terminal = true;
                }
            }
        }

        self.steps += 1;
        if self.steps >= spec.episode_cap {
            terminal = true;
        }
        reward = self.task.mode.transform_reward(reward * spec.reward_scale);

        let frame = self.render_frame();
        self.frames.pop_front();
        self.frames.push_back(frame);
        Ok(StepOutcome { obs: self.observation(), reward, terminal })
    }

    /// Single frame [2, H, W]: object plane then paddle plane, with the
    /// mode's observation transform applied.
    fn render_frame(&self) -> Vec<f64> {
        let spec = &self.task.spec;
        let (h, w) = (spec.height, spec.width);
        let mut frame = vec![0.0; 2 * h * w];
        let ball_row = (self.ball_row.clamp(0, h as i64 - 1)) as usize;
        frame[ball_row * w + self.ball_col as usize] = 1.0;
        frame[h * w + (h - 1) * w + self.paddle_col as usize] = 1.0;
        self.task.mode.transform_obs(&mut frame);
        frame
    }

    fn observation(&self) -> Observation {
        let spec = &self.task.spec;
        let per_frame = spec.channels * spec.height * spec.width;
        let mut data = Vec::with_capacity(self.frames.len() * per_frame);
        for f in &self.frames {
            data.extend_from_slice(f);
        }
        Observation {
            channels: spec.frame_stack * spec.channels,
            height: spec.height,
            width: spec.width,
            data,
        }
    }
}

/// Reflect a column off the grid walls.
fn reflect(col: i64, width: i64) -> i64 {
    let mut c = col;
    loop {
        if c < 0 {
            c = -c;
        } else if c >= width {
            c = 2 * (width - 1) - c;
        } else {
            return c;
        }
    }
}
