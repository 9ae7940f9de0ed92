//! The learner: action selection, TD targets, gradient steps, target sync.

use super::batch::Batch;
use super::config::{AgentConfig, LossKind};
use super::network::{build_network, LayerInfo, QNetwork, SiteInfo};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamHyper, AdamState, ParamStore, Tape, Tensor};
use crate::util::{derive_seed, stream};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of one learn step: the pre-update loss and the per-sample TD
/// errors that feed the replay priorities.
#[derive(Debug, Clone)]
pub struct LearnReport {
    pub loss: f64,
    pub td_errors: Vec<f64>,
}

/// Post-activation values at one probed site for one update.
#[derive(Debug, Clone)]
pub struct SiteActivations {
    pub name: String,
    pub pre: Tensor,
    pub post: Tensor,
}

/// Per-layer weight gradients and probed activations from one traced
/// update; consumed by the diagnostics probes.
#[derive(Debug, Clone)]
pub struct LearnTrace {
    pub layer_grads: Vec<(String, Tensor)>,
    pub sites: Vec<SiteActivations>,
}

/// All mutable learner state: online weights, target weights, optimizer
/// moments, the learn-step counter, and the policy random stream. The
/// target weights are only ever written by `sync_target`.
pub struct DqnAgent {
    pub config: AgentConfig,
    net: QNetwork,
    params: ParamStore,
    target: ParamStore,
    adam: AdamState,
    learn_steps: u64,
    policy_rng: ChaCha8Rng,
}

impl DqnAgent {
    pub fn new(
        config: AgentConfig,
        input_shape: (usize, usize, usize),
        actions: usize,
        seed: u64,
    ) -> Result<Self> {
        crate::util::tune_allocator_for_training();
        config.validate()?;
        let (net, params) = build_network(
            &config.network,
            input_shape,
            actions,
            derive_seed(seed, stream::AGENT_INIT),
        )?;
        let target = params.clone();
        let adam = AdamState::new(
            AdamHyper {
                learning_rate: config.learning_rate,
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                epsilon: config.adam_epsilon,
            },
            &params,
        );
        Ok(DqnAgent {
            config,
            net,
            params,
            target,
            adam,
            learn_steps: 0,
            policy_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::AGENT_POLICY)),
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Direct weight surgery (ablations, hand-built fixtures). The caller
    /// keeps shapes intact.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn target_params(&self) -> &ParamStore {
        &self.target
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn layer_infos(&self) -> Vec<LayerInfo> {
        self.net.layer_infos()
    }

    pub fn site_infos(&self) -> Vec<SiteInfo> {
        self.net.site_infos()
    }

    /// Q-values for a single observation.
    pub fn q_values(&self, obs: &Tensor) -> Result<Vec<f64>> {
        let mut shape = vec![1];
        shape.extend_from_slice(&obs.shape);
        let batched = Tensor { shape, data: obs.data.clone() };
        Ok(self.net.forward_values(&self.params, &batched)?.q.data)
    }

    /// Epsilon-greedy over the first `valid_actions` Q entries; greedy ties
    /// break to the lowest index.
    pub fn select_action(&mut self, obs: &Tensor, epsilon: f64, valid_actions: usize) -> Result<usize> {
        let n = valid_actions.min(self.net.actions);
        if n == 0 {
            return Err(Error::usage("select_action with an empty action set"));
        }
        if epsilon > 0.0 {
            let u: f64 = self.policy_rng.gen();
            if u < epsilon {
                return Ok(self.policy_rng.gen_range(0..n));
            }
        }
        let q = self.q_values(obs)?;
        let mut best = 0;
        for a in 1..n {
            if q[a] > q[best] {
                best = a;
            }
        }
        Ok(best)
    }

    /// y = reward_sum + discount * max_a target-Q(bootstrap, a); constant
    /// with respect to the online weights.
    pub fn compute_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let qbar = self.net.forward_values(&self.target, &batch.bootstrap_obs)?.q;
        let a = self.net.actions;
        let mut out = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let row = &qbar.data[i * a..(i + 1) * a];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.push(batch.reward_sums[i] + batch.discounts[i] * max);
        }
        Ok(out)
    }

    /// The importance-weighted loss the next learn step would see, without
    /// touching any state. Runs the same taped path as `learn_step`.
    pub fn evaluate_loss(&self, batch: &Batch) -> Result<f64> {
        let targets = self.compute_targets(batch)?;
        let mut tape = Tape::new();
        let pass = self.net.forward_traced(&self.params, &batch.obs, &mut tape)?;
        let pred = tape.gather(pass.q, &batch.actions)?;
        let loss = self.loss_node(&mut tape, pred, &targets, &batch.weights)?;
        Ok(tape.value(loss).data[0])
    }

    fn loss_node(&self, tape: &mut Tape, pred: crate::numerics::BufId, targets: &[f64], weights: &[f64]) -> Result<crate::numerics::BufId> {
        match self.config.loss {
            LossKind::Huber => tape.huber_loss(pred, targets, weights, self.config.huber_delta),
            LossKind::Squared => tape.squared_loss(pred, targets, weights),
        }
    }

    /// One importance-weighted TD update. Returns the pre-update loss and
    /// TD errors; with `want_trace`, also the per-layer weight gradients
    /// and probed activations of this update.
    pub fn learn_step(&mut self, batch: &Batch, want_trace: bool) -> Result<(LearnReport, Option<LearnTrace>)> {
        if batch.len() != self.config.batch_size {
            return Err(Error::usage(format!(
                "learn_step batch of {} (configured {})",
                batch.len(),
                self.config.batch_size
            )));
        }
        let targets = self.compute_targets(batch)?;
        let mut tape = Tape::new();
        let pass = self.net.forward_traced(&self.params, &batch.obs, &mut tape)?;
        let pred = tape.gather(pass.q, &batch.actions)?;
        let td_errors: Vec<f64> = tape
            .value(pred)
            .data
            .iter()
            .zip(targets.iter())
            .map(|(p, y)| p - y)
            .collect();
        let loss_id = self.loss_node(&mut tape, pred, &targets, &batch.weights)?;
        let loss = tape.value(loss_id).data[0];
        if !loss.is_finite() {
            return Err(Error::NonFinite("learn_step loss".into()));
        }
        tape.backward(loss_id)?;

        let grads: Vec<Tensor> = pass.param_ids.iter().map(|&id| tape.grad_tensor(id)).collect();
        let trace = if want_trace {
            let layer_grads = self
                .layer_infos()
                .into_iter()
                .map(|info| {
                    let idx = self
                        .params
                        .index_of(&format!("{}.w", info.name))
                        .expect("layer weight exists");
                    (info.name, grads[idx].clone())
                })
                .collect();
            let sites = pass
                .sites
                .iter()
                .map(|(name, pre, post)| SiteActivations {
                    name: name.clone(),
                    pre: tape.value(*pre).clone(),
                    post: tape.value(*post).clone(),
                })
                .collect();
            Some(LearnTrace { layer_grads, sites })
        } else {
            None
        };

        adam_step(&mut self.params, &grads, &mut self.adam)?;
        self.learn_steps += 1;
        if self.learn_steps % self.config.target_sync_period == 0 {
            self.sync_target();
        }
        Ok((LearnReport { loss, td_errors }, trace))
    }

    /// Full copy of the online weights into the target network.
    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.params).expect("online and target stores share shapes");
    }
}
