//! Experiment configuration file.
//!
//! TOML, covering every run parameter. Unknown keys anywhere are errors, so
//! a typo cannot silently fall back to a default.

use crate::agent::AgentConfig;
use crate::diagnostics::ProbeSettings;
use crate::envs::{EnvSpec, GameKind, ModeParams, SwitchSchedule, TaskDef};
use crate::error::{Error, Result};
use crate::replay::ReplayConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Cycle through every task in order, K frames per visit.
    Continual,
    /// One task, trained uninterrupted for the same per-task frame budget.
    Scratch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub frames_per_visit: u64,
    pub cycles: u64,
}

/// One task entry as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub game: GameKind,
    #[serde(default = "d_grid")]
    pub height: usize,
    #[serde(default = "d_grid")]
    pub width: usize,
    #[serde(default = "d_channels")]
    pub channels: usize,
    #[serde(default = "d_stack")]
    pub frame_stack: usize,
    #[serde(default = "d_cap")]
    pub episode_cap: usize,
    #[serde(default = "d_one")]
    pub reward_scale: f64,
    #[serde(default)]
    pub mode: ModeParams,
}

fn d_grid() -> usize {
    10
}
fn d_channels() -> usize {
    2
}
fn d_stack() -> usize {
    2
}
fn d_cap() -> usize {
    500
}
fn d_one() -> f64 {
    1.0
}

impl TaskConfig {
    pub fn new(id: impl Into<String>, game: GameKind) -> Self {
        TaskConfig {
            id: id.into(),
            game,
            height: d_grid(),
            width: d_grid(),
            channels: d_channels(),
            frame_stack: d_stack(),
            episode_cap: d_cap(),
            reward_scale: d_one(),
            mode: ModeParams::default(),
        }
    }

    pub fn to_task(&self) -> TaskDef {
        let mut spec = EnvSpec::new(self.id.clone(), self.game);
        spec.height = self.height;
        spec.width = self.width;
        spec.channels = self.channels;
        spec.frame_stack = self.frame_stack;
        spec.episode_cap = self.episode_cap;
        spec.reward_scale = self.reward_scale;
        TaskDef::new(spec, self.mode.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub kind: RunKind,
    /// Task id trained by a scratch run; required iff kind = scratch.
    #[serde(default)]
    pub scratch_task: Option<String>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub schedule: ScheduleConfig,
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub replay: ReplayConfig,
    #[serde(default)]
    pub probes: ProbeSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::config(
                "run_id must be non-empty and use only [A-Za-z0-9_-]",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.tasks.is_empty() {
            return Err(Error::config("at least one task is required"));
        }
        let mut ids: Vec<&str> = self.tasks.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.tasks.len() {
            return Err(Error::config("task ids must be unique"));
        }
        match self.kind {
            RunKind::Scratch => {
                let Some(id) = &self.scratch_task else {
                    return Err(Error::config("scratch runs need scratch_task"));
                };
                if !self.tasks.iter().any(|t| &t.id == id) {
                    return Err(Error::config(format!("scratch_task {id} is not in tasks")));
                }
            }
            RunKind::Continual => {}
        }
        self.agent.validate()?;
        self.replay.validate(self.agent.batch_size)?;
        // Resolving the schedule validates every task and the shared shape.
        let schedule = self.resolve_schedule()?;
        schedule.obs_shape()?;
        Ok(())
    }

    /// The schedule this run actually executes: all tasks for continual,
    /// the chosen single task (same per-visit partitioning) for scratch.
    pub fn resolve_schedule(&self) -> Result<SwitchSchedule> {
        let tasks: Vec<TaskDef> = match self.kind {
            RunKind::Continual => self.tasks.iter().map(|t| t.to_task()).collect(),
            RunKind::Scratch => {
                let id = self.scratch_task.as_deref().unwrap_or_default();
                self.tasks
                    .iter()
                    .filter(|t| t.id == id)
                    .map(|t| t.to_task())
                    .collect()
            }
        };
        SwitchSchedule::new(tasks, self.schedule.frames_per_visit, self.schedule.cycles)
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(&self.run_id).join(format!("seed{seed}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
run_id = "smoke"
kind = "continual"
seeds = [1, 2]
output_dir = "runs"

[schedule]
frames_per_visit = 100
cycles = 2

[[tasks]]
id = "catch"
game = "catch"

[[tasks]]
id = "catch-invert"
game = "catch"
[tasks.mode]
invert_obs = true
"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(cfg.tasks.len(), 2);
        assert!(cfg.tasks[1].mode.invert_obs);
        let schedule = cfg.resolve_schedule().unwrap();
        assert_eq!(schedule.total_frames, 400);
    }

    #[test]
    fn unknown_keys_are_errors_everywhere() {
        let bad = minimal_toml().replace("[schedule]", "typo_key = 1\n[schedule]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());

        let bad = minimal_toml() + "\n[agent]\nlearningrate = 0.1\n";
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());

        let bad = minimal_toml().replace("[tasks.mode]", "[tasks.mode]\nbogus = true");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn scratch_requires_valid_task() {
        let mut cfg = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        cfg.kind = RunKind::Scratch;
        assert!(cfg.validate().is_err());
        cfg.scratch_task = Some("nope".into());
        assert!(cfg.validate().is_err());
        cfg.scratch_task = Some("catch".into());
        cfg.validate().unwrap();
        let schedule = cfg.resolve_schedule().unwrap();
        assert_eq!(schedule.tasks.len(), 1);
        assert_eq!(schedule.total_frames, 200);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
