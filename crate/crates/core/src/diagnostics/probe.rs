//! Per-visit probes and their accumulators.

use crate::agent::{DqnAgent, LearnTrace};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::replay::ReplayBuffer;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub enabled: bool,
    /// Training updates observed by the gradient/activation probes.
    pub updates: usize,
    /// Mini-batches averaged by the loss probe.
    pub minibatches: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings { enabled: true, updates: 100, minibatches: 100 }
    }
}

/// Deep, immutable copy of the weights at a visit's first frame.
pub fn snapshot_weights(agent: &DqnAgent) -> ParamStore {
    agent.params().clone()
}

/// Per-layer l2 norm of (current - snapshot) over each layer's weight
/// tensor. Layer order follows the network.
pub fn weight_change(
    snapshot: &ParamStore,
    current: &ParamStore,
    layer_names: &[String],
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(layer_names.len());
    for name in layer_names {
        let key = format!("{name}.w");
        let (Some(i), Some(j)) = (snapshot.index_of(&key), current.index_of(&key)) else {
            return Err(Error::usage(format!("no weight tensor named {key}")));
        };
        let (a, b) = (snapshot.value(i), current.value(j));
        if a.shape != b.shape {
            return Err(Error::shape(
                format!("weight_change {key}"),
                format!("{:?}", a.shape),
                format!("{:?}", b.shape),
            ));
        }
        let sq: f64 = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| (y - x) * (y - x))
            .sum();
        out.push((name.clone(), sq.sqrt()));
    }
    Ok(out)
}

/// Fraction of entries that are not exactly zero over a batch of
/// post-activation tensors.
pub fn activation_l0(batches: &[Tensor]) -> f64 {
    let mut nonzero = 0usize;
    let mut total = 0usize;
    for t in batches {
        nonzero += t.l0();
        total += t.len();
    }
    if total == 0 {
        0.0
    } else {
        nonzero as f64 / total as f64
    }
}

/// Mean sampled loss over `minibatches` prioritized batches drawn with an
/// external random stream; performs no updates and leaves the buffer's own
/// sampling stream untouched.
pub fn loss_probe(
    agent: &DqnAgent,
    buffer: &ReplayBuffer,
    rng: &mut ChaCha8Rng,
    minibatches: usize,
    beta: f64,
) -> Result<f64> {
    let batch_size = agent.config.batch_size;
    if buffer.len() < batch_size {
        return Err(Error::usage(format!(
            "loss probe needs {batch_size} stored transitions, buffer has {}",
            buffer.len()
        )));
    }
    let mut total = 0.0;
    for _ in 0..minibatches {
        let sample = buffer.sample_with_rng(rng, batch_size, beta)?;
        let batch = crate::agent::Batch::from_replay(buffer, &sample)?;
        total += agent.evaluate_loss(&batch)?;
    }
    Ok(total / minibatches as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradNorms {
    pub layer: String,
    /// Count of entries not exactly zero, averaged over updates.
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteActivationStats {
    pub site: String,
    pub nonzero: u64,
    pub total: u64,
    pub pre_zero: u64,
    pub pre_total: u64,
}

impl SiteActivationStats {
    /// Fraction of post-activation units that are not exactly zero.
    pub fn nonzero_fraction(&self) -> f64 {
        self.nonzero as f64 / self.total as f64
    }

    /// Fraction of pre-activation units that are exactly zero.
    pub fn pre_zero_fraction(&self) -> f64 {
        self.pre_zero as f64 / self.pre_total as f64
    }
}

/// One visit's completed measurements.
#[derive(Debug, Clone)]
pub struct VisitProbe {
    pub task_index: usize,
    pub task_id: String,
    pub visit: u64,
    /// Global frame at which the halfway measurements ran.
    pub probe_frame: u64,
    pub weight_change: Vec<(String, f64)>,
    pub grad_norms: Vec<LayerGradNorms>,
    pub activations: Vec<SiteActivationStats>,
    pub mean_loss: f64,
}

/// Accumulates one visit's probe through its three phases: snapshot at the
/// visit's first frame, halfway measurements, then observation of the next
/// `updates` training updates.
pub struct VisitProbeBuilder {
    task_index: usize,
    task_id: String,
    visit: u64,
    snapshot: ParamStore,
    updates_needed: usize,
    halfway: Option<(Vec<(String, f64)>, f64, u64)>,
    grad_sums: Vec<(String, f64, f64, f64)>,
    act_stats: Vec<SiteActivationStats>,
    updates_seen: usize,
}

impl VisitProbeBuilder {
    pub fn new(
        task_index: usize,
        task_id: impl Into<String>,
        visit: u64,
        snapshot: ParamStore,
        updates_needed: usize,
    ) -> Self {
        VisitProbeBuilder {
            task_index,
            task_id: task_id.into(),
            visit,
            snapshot,
            updates_needed,
            halfway: None,
            grad_sums: Vec::new(),
            act_stats: Vec::new(),
            updates_seen: 0,
        }
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }

    pub fn visit(&self) -> u64 {
        self.visit
    }

    /// Halfway measurements: weight change since the snapshot and the mean
    /// sampled loss. Arms the gradient/activation capture.
    pub fn at_halfway(
        &mut self,
        agent: &DqnAgent,
        buffer: &ReplayBuffer,
        rng: &mut ChaCha8Rng,
        settings: &ProbeSettings,
        frame: u64,
    ) -> Result<()> {
        let layer_names: Vec<String> = agent.layer_infos().into_iter().map(|l| l.name).collect();
        let wc = weight_change(&self.snapshot, agent.params(), &layer_names)?;
        let loss = loss_probe(agent, buffer, rng, settings.minibatches, buffer.config().beta)?;
        self.halfway = Some((wc, loss, frame));
        Ok(())
    }

    /// Whether the builder is waiting on training updates.
    pub fn armed(&self) -> bool {
        self.halfway.is_some() && self.updates_seen < self.updates_needed
    }

    /// Feed one traced update; returns true once the capture is complete.
    pub fn observe_update(&mut self, trace: &LearnTrace) -> bool {
        if !self.armed() {
            return !self.armed() && self.halfway.is_some();
        }
        if self.grad_sums.is_empty() {
            self.grad_sums = trace
                .layer_grads
                .iter()
                .map(|(name, _)| (name.clone(), 0.0, 0.0, 0.0))
                .collect();
            self.act_stats = trace
                .sites
                .iter()
                .map(|s| SiteActivationStats {
                    site: s.name.clone(),
                    nonzero: 0,
                    total: 0,
                    pre_zero: 0,
                    pre_total: 0,
                })
                .collect();
        }
        for (i, (_, g)) in trace.layer_grads.iter().enumerate() {
            let entry = &mut self.grad_sums[i];
            entry.1 += g.l0() as f64;
            entry.2 += g.l1();
            entry.3 += g.l2();
        }
        for (i, s) in trace.sites.iter().enumerate() {
            let st = &mut self.act_stats[i];
            st.nonzero += s.post.l0() as u64;
            st.total += s.post.len() as u64;
            st.pre_zero += (s.pre.len() - s.pre.l0()) as u64;
            st.pre_total += s.pre.len() as u64;
        }
        self.updates_seen += 1;
        self.updates_seen >= self.updates_needed
    }

    /// Finished probe, or None when the visit ended before the capture
    /// completed (the probe is then excluded from the report).
    pub fn finalize(self) -> Option<VisitProbe> {
        let (weight_change, mean_loss, probe_frame) = self.halfway?;
        if self.updates_seen < self.updates_needed {
            log::warn!(
                "probe for task {} visit {} saw {}/{} updates; marked incomplete and excluded",
                self.task_id,
                self.visit,
                self.updates_seen,
                self.updates_needed
            );
            return None;
        }
        let n = self.updates_seen as f64;
        let grad_norms = self
            .grad_sums
            .into_iter()
            .map(|(layer, l0, l1, l2)| LayerGradNorms { layer, l0: l0 / n, l1: l1 / n, l2: l2 / n })
            .collect();
        Some(VisitProbe {
            task_index: self.task_index,
            task_id: self.task_id,
            visit: self.visit,
            probe_frame,
            weight_change,
            grad_norms,
            activations: self.act_stats,
            mean_loss,
        })
    }
}
