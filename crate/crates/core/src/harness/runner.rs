//! The training loop.
//!
//! Executes a schedule frame by frame. At a switch boundary only the
//! environment changes: weights, optimizer moments, and replay contents
//! carry over untouched. Probes hook the loop at each visit's first and
//! halfway frames and observe (never add) training updates.

use super::config::{ExperimentConfig, RunKind};
use super::metrics::{MetricRow, MetricWriter};
use crate::agent::{Batch, DqnAgent};
use crate::diagnostics::{snapshot_weights, DiagnosticsReport, NormStat, VisitProbe, VisitProbeBuilder};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::numerics::save_checkpoint;
use crate::replay::{NStepAssembler, ReplayBuffer};
use crate::util::{derive_seed, stream};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::{Path, PathBuf};

/// Rolling-return window, in episodes.
pub const ROLLING_WINDOW: usize = 100;

/// Sidecar describing a run directory; the plot renderer uses it to refuse
/// overlays of incompatible schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub seed: u64,
    pub kind: RunKind,
    pub frames_per_visit: u64,
    pub cycles: u64,
    pub task_ids: Vec<String>,
}

impl RunMeta {
    pub fn load(dir: &Path) -> Result<RunMeta> {
        let path = dir.join("run_meta.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

/// Everything a caller needs from a finished run without re-reading files.
#[derive(Debug)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub frames: u64,
    pub episodes: u64,
    /// Per task id: (visit, rolling mean return at that visit's end).
    pub visit_end_returns: Vec<(String, Vec<(u64, f64)>)>,
    pub report: DiagnosticsReport,
    pub out_dir: PathBuf,
    pub metrics_jsonl: PathBuf,
    pub metrics_csv: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunSummary {
    pub fn visit_end(&self, task_id: &str, visit: u64) -> Option<f64> {
        self.visit_end_returns
            .iter()
            .find(|(t, _)| t == task_id)
            .and_then(|(_, vs)| vs.iter().find(|(v, _)| *v == visit))
            .map(|(_, r)| *r)
    }
}

struct TaskReturns {
    window: VecDeque<f64>,
    sum: f64,
    visit_end: Vec<(u64, f64)>,
}

impl TaskReturns {
    fn new() -> Self {
        TaskReturns { window: VecDeque::with_capacity(ROLLING_WINDOW), sum: 0.0, visit_end: Vec::new() }
    }

    fn record(&mut self, episode_return: f64, visit: u64) -> f64 {
        if self.window.len() == ROLLING_WINDOW {
            self.sum -= self.window.pop_front().unwrap();
        }
        self.window.push_back(episode_return);
        self.sum += episode_return;
        let rolling = self.sum / self.window.len() as f64;
        match self.visit_end.last_mut() {
            Some((v, r)) if *v == visit => *r = rolling,
            _ => self.visit_end.push((visit, rolling)),
        }
        rolling
    }
}

/// Run one (config, seed) pair to completion, writing metrics, a run
/// sidecar, and a final checkpoint under the run directory.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunSummary> {
    crate::util::tune_allocator_for_training();
    config.validate()?;
    let schedule = config.resolve_schedule()?;
    let obs_shape = schedule.obs_shape()?;
    let actions = schedule.max_actions();
    let k = schedule.frames_per_visit;
    let total = schedule.total_frames;

    let out_dir = config.run_dir(seed);
    let mut writer = MetricWriter::create(&out_dir)?;
    let meta = RunMeta {
        run_id: config.run_id.clone(),
        seed,
        kind: config.kind,
        frames_per_visit: k,
        cycles: config.schedule.cycles,
        task_ids: schedule.tasks.iter().map(|t| t.spec.id.clone()).collect(),
    };
    std::fs::write(
        out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;

    let mut agent = DqnAgent::new(config.agent.clone(), obs_shape, actions, seed)?;
    let mut buffer = ReplayBuffer::new(config.replay.clone(), seed);
    let mut assembler = NStepAssembler::new(config.replay.n_step, config.agent.gamma)?;
    let mut episode_seeder = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::EPISODES));
    let mut probe_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::PROBES));

    let mut report = DiagnosticsReport {
        layer_weights: agent
            .layer_infos()
            .into_iter()
            .map(|l| (l.name, l.weight_count))
            .collect(),
        site_units: agent.site_infos().into_iter().map(|s| (s.name, s.units)).collect(),
        hidden_sites: agent.network().hidden_site_names(),
        probes: Vec::new(),
    };
    let mut probe: Option<VisitProbeBuilder> = None;

    let mut returns: Vec<TaskReturns> = schedule.tasks.iter().map(|_| TaskReturns::new()).collect();
    let mut env = Env::new(schedule.tasks[0].clone())?;
    let mut obs = env.reset(episode_seeder.next_u64());
    let mut current_task = 0usize;
    let mut episode_return = 0.0;
    let mut episodes = 0u64;
    let min_history = config.replay.min_history.max(config.agent.batch_size);

    let fail = |writer: &mut MetricWriter, out_dir: &Path, err: Error| -> Error {
        let _ = writer.flush();
        let record = serde_json::json!({ "error": err.to_string() });
        let _ = std::fs::write(out_dir.join("failure.json"), record.to_string());
        err
    };

    for frame in 0..total {
        let (task_idx, visit) = schedule.lookup(frame)?;

        if frame % k == 0 {
            // Visit boundary. A still-pending probe did not finish its
            // update capture; it is excluded from the report.
            if let Some(p) = probe.take() {
                p.finalize();
            }
            if config.probes.enabled {
                probe = Some(VisitProbeBuilder::new(
                    task_idx,
                    schedule.tasks[task_idx].spec.id.clone(),
                    visit,
                    snapshot_weights(&agent),
                    config.probes.updates,
                ));
            }
        }

        if task_idx != current_task || frame == 0 {
            // Task switch: truncate open n-step windows at the old task's
            // last observation, then swap environments. Nothing agent- or
            // replay-side is reset.
            if frame != 0 {
                for t in assembler.flush_truncated(&obs.to_tensor()) {
                    buffer.push(t);
                }
            }
            env = Env::new(schedule.tasks[task_idx].clone())?;
            obs = env.reset(episode_seeder.next_u64());
            current_task = task_idx;
            episode_return = 0.0;
        }

        if frame % k == k / 2 {
            if let Some(p) = probe.as_mut() {
                if buffer.len() >= config.agent.batch_size {
                    p.at_halfway(&agent, &buffer, &mut probe_rng, &config.probes, frame)
                        .map_err(|e| fail(&mut writer, &out_dir, e))?;
                } else {
                    log::warn!(
                        "halfway probe at frame {frame} skipped: buffer holds {} < {} transitions",
                        buffer.len(),
                        config.agent.batch_size
                    );
                }
            }
        }

        let epsilon = config.agent.epsilon_at(frame, total);
        let obs_tensor = obs.to_tensor();
        let action = agent.select_action(&obs_tensor, epsilon, env.action_count())?;
        let step = env.step(action)?;
        if !step.reward.is_finite() {
            return Err(fail(&mut writer, &out_dir, Error::NonFinite(format!("reward at frame {frame}"))));
        }
        for t in assembler.on_step(&obs_tensor, action, step.reward, &step.obs.to_tensor(), step.terminal) {
            buffer.push(t);
        }
        episode_return += step.reward;

        if step.terminal {
            episodes += 1;
            let task_id = &schedule.tasks[task_idx].spec.id;
            let rolling = returns[task_idx].record(episode_return, visit);
            for (metric, value) in [("episode_return", episode_return), ("return_rolling_100", rolling)] {
                writer.write(&MetricRow {
                    run_id: config.run_id.clone(),
                    seed,
                    frame,
                    task: task_id.clone(),
                    visit,
                    metric: metric.into(),
                    value,
                })?;
            }
            episode_return = 0.0;
            obs = env.reset(episode_seeder.next_u64());
        } else {
            obs = step.obs;
        }

        if frame % config.agent.learn_every == 0 && buffer.len() >= min_history {
            let sample = buffer
                .sample(config.agent.batch_size, config.replay.beta)
                .map_err(|e| fail(&mut writer, &out_dir, e))?;
            let batch = Batch::from_replay(&buffer, &sample)?;
            let want_trace = probe.as_ref().map(|p| p.armed()).unwrap_or(false);
            let (learn, trace) = match agent.learn_step(&batch, want_trace) {
                Ok(ok) => ok,
                Err(e) => return Err(fail(&mut writer, &out_dir, e)),
            };
            buffer.update_priorities(&sample.indices, &learn.td_errors)?;
            if agent.learn_steps() % 256 == 0 {
                writer.write(&MetricRow {
                    run_id: config.run_id.clone(),
                    seed,
                    frame,
                    task: schedule.tasks[task_idx].spec.id.clone(),
                    visit,
                    metric: "train_loss".into(),
                    value: learn.loss,
                })?;
            }
            if let (Some(tr), Some(p)) = (trace.as_ref(), probe.as_mut()) {
                if p.observe_update(tr) {
                    let done = probe.take().unwrap();
                    if let Some(vp) = done.finalize() {
                        report.probes.push(vp);
                        let vp = report.probes.last().unwrap();
                        emit_probe_rows(&mut writer, config, seed, frame, &report, vp)?;
                        writer.flush()?;
                    }
                }
            }
        }
    }

    if let Some(p) = probe.take() {
        p.finalize();
    }
    let checkpoint = out_dir.join("final.ckpt");
    save_checkpoint(&checkpoint, agent.params())?;
    let (metrics_jsonl, metrics_csv) = writer.finish()?;

    Ok(RunSummary {
        run_id: config.run_id.clone(),
        seed,
        frames: total,
        episodes,
        visit_end_returns: schedule
            .tasks
            .iter()
            .zip(returns)
            .map(|(t, r)| (t.spec.id.clone(), r.visit_end))
            .collect(),
        report,
        out_dir,
        metrics_jsonl,
        metrics_csv,
        checkpoint,
    })
}

fn emit_probe_rows(
    writer: &mut MetricWriter,
    config: &ExperimentConfig,
    seed: u64,
    frame: u64,
    report: &DiagnosticsReport,
    probe: &VisitProbe,
) -> Result<()> {
    let mut write = |metric: String, value: f64| -> Result<()> {
        writer.write(&MetricRow {
            run_id: config.run_id.clone(),
            seed,
            frame,
            task: probe.task_id.clone(),
            visit: probe.visit,
            metric,
            value,
        })
    };
    for (layer, v) in &probe.weight_change {
        write(format!("probe/weight_change/{layer}"), *v)?;
    }
    for g in &probe.grad_norms {
        write(format!("probe/grad_l0/{}", g.layer), g.l0)?;
        write(format!("probe/grad_l1/{}", g.layer), g.l1)?;
        write(format!("probe/grad_l2/{}", g.layer), g.l2)?;
    }
    for stat in [NormStat::WeightChange, NormStat::GradL0, NormStat::GradL1, NormStat::GradL2] {
        match report.normalized_probe(probe, stat) {
            Ok(v) => write(format!("probe/{}_norm", stat.name()), v)?,
            Err(e) => log::warn!("normalization skipped for {}: {e}", stat.name()),
        }
    }
    for a in &probe.activations {
        write(format!("probe/act_l0/{}", a.site), a.nonzero_fraction())?;
        write(format!("probe/act_pre_zero/{}", a.site), a.pre_zero_fraction())?;
    }
    if let Some((_, v)) = report.hidden_activation_series(&probe.task_id).iter().find(|(v, _)| *v == probe.visit) {
        write("probe/act_l0_hidden".into(), *v)?;
    }
    write("probe/loss".into(), probe.mean_loss)?;
    Ok(())
}

/// Run every seed of a config; seeds run as independent parallel workers
/// writing to disjoint directories.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&s| run_experiment(config, s))
        .collect()
}
