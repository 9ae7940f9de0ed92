//! The visit cycle: which task owns which global frame.

use super::task::TaskDef;
use crate::error::{Error, Result};

/// An ordered task list visited round-robin, K frames at a time.
///
/// The task at global frame f is `tasks[(f / K) % len]` and the visit index
/// is `f / (K * len)`; both are total on [0, total_frames).
#[derive(Debug, Clone)]
pub struct SwitchSchedule {
    pub tasks: Vec<TaskDef>,
    pub frames_per_visit: u64,
    pub total_frames: u64,
}

impl SwitchSchedule {
    pub fn new(tasks: Vec<TaskDef>, frames_per_visit: u64, cycles: u64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::config("schedule needs at least one task"));
        }
        if frames_per_visit == 0 || cycles == 0 {
            return Err(Error::config("frames_per_visit and cycles must be positive"));
        }
        for t in &tasks {
            t.validate()?;
        }
        let total = frames_per_visit
            .checked_mul(tasks.len() as u64)
            .and_then(|v| v.checked_mul(cycles))
            .ok_or_else(|| Error::config("schedule frame budget overflows u64"))?;
        Ok(SwitchSchedule { tasks, frames_per_visit, total_frames: total })
    }

    pub fn cycles(&self) -> u64 {
        self.total_frames / (self.frames_per_visit * self.tasks.len() as u64)
    }

    /// (task index, visit index) owning a global frame.
    pub fn lookup(&self, frame: u64) -> Result<(usize, u64)> {
        if frame >= self.total_frames {
            return Err(Error::Range(format!(
                "frame {frame} outside the schedule budget {}",
                self.total_frames
            )));
        }
        let k = self.frames_per_visit;
        let len = self.tasks.len() as u64;
        Ok((((frame / k) % len) as usize, frame / (k * len)))
    }

    /// Largest action set over all tasks; the shared Q-head width.
    pub fn max_actions(&self) -> usize {
        self.tasks.iter().map(|t| t.action_count()).max().unwrap_or(0)
    }

    /// The common observation shape, or an error if tasks disagree.
    pub fn obs_shape(&self) -> Result<(usize, usize, usize)> {
        let shape = self.tasks[0].obs_shape();
        for t in &self.tasks[1..] {
            if t.obs_shape() != shape {
                return Err(Error::config(format!(
                    "task {} observation shape {:?} differs from {:?}; one network serves all tasks",
                    t.spec.id,
                    t.obs_shape(),
                    shape
                )));
            }
        }
        Ok(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::task::{EnvSpec, GameKind, ModeParams};

    fn tasks(n: usize) -> Vec<TaskDef> {
        (0..n)
            .map(|i| TaskDef::new(EnvSpec::new(format!("t{i}"), GameKind::Catch), ModeParams::identity()))
            .collect()
    }

    #[test]
    fn paper_scale_arithmetic() {
        // 10 tasks, 20M frames per visit, 1B total: frame 0 is (task 0,
        // visit 0) and every task is visited 5 times.
        let s = SwitchSchedule::new(tasks(10), 20_000_000, 5).unwrap();
        assert_eq!(s.total_frames, 1_000_000_000);
        assert_eq!(s.lookup(0).unwrap(), (0, 0));
        assert_eq!(s.cycles(), 5);
        assert_eq!(s.lookup(s.total_frames - 1).unwrap(), (9, 4));
    }

    #[test]
    fn small_schedule_examples() {
        let s = SwitchSchedule::new(tasks(3), 20, 2).unwrap();
        assert_eq!(s.lookup(45).unwrap(), (2, 0));
        assert_eq!(s.lookup(60).unwrap(), (0, 1));
    }

    #[test]
    fn out_of_budget_frame_is_a_range_error() {
        let s = SwitchSchedule::new(tasks(2), 10, 1).unwrap();
        assert!(s.lookup(20).is_err());
        assert!(s.lookup(19).is_ok());
    }

    #[test]
    fn partition_counts_exact_over_full_cycle() {
        // Brute-force: over one full cycle every task owns exactly K frames.
        let s = SwitchSchedule::new(tasks(4), 7, 3).unwrap();
        let cycle = 7 * 4;
        let mut counts = [0u64; 4];
        for f in 0..cycle {
            let (t, v) = s.lookup(f).unwrap();
            assert_eq!(v, 0);
            counts[t] += 1;
        }
        assert_eq!(counts, [7, 7, 7, 7]);
    }

    #[test]
    fn mismatched_obs_shapes_rejected() {
        let mut ts = tasks(2);
        ts[1].spec.height = 8;
        let s = SwitchSchedule::new(ts, 10, 1).unwrap();
        assert!(s.obs_shape().is_err());
    }
}
