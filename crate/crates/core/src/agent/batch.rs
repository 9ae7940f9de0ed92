//! Mini-batch assembly from replay samples.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::replay::{ReplayBuffer, SampleBatch};

/// A learner-ready mini-batch: stacked observations, the actions taken,
/// n-step reward sums, bootstrap discounts/observations, and importance
/// weights.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Tensor,
    pub actions: Vec<usize>,
    pub reward_sums: Vec<f64>,
    pub discounts: Vec<f64>,
    pub bootstrap_obs: Tensor,
    pub weights: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Unpack the sampled transitions into stacked tensors.
    pub fn from_replay(buffer: &ReplayBuffer, sample: &SampleBatch) -> Result<Batch> {
        if sample.indices.is_empty() {
            return Err(Error::usage("empty sample batch"));
        }
        let first = buffer.get(sample.indices[0]).obs.unpack();
        let per = first.len();
        let b = sample.indices.len();
        let mut obs_shape = vec![b];
        obs_shape.extend_from_slice(&first.shape);

        let mut obs = vec![0.0; b * per];
        let mut boot = vec![0.0; b * per];
        let mut actions = Vec::with_capacity(b);
        let mut reward_sums = Vec::with_capacity(b);
        let mut discounts = Vec::with_capacity(b);
        for (i, &idx) in sample.indices.iter().enumerate() {
            let t = buffer.get(idx);
            t.obs.unpack_into(&mut obs[i * per..(i + 1) * per]);
            t.bootstrap_obs.unpack_into(&mut boot[i * per..(i + 1) * per]);
            actions.push(t.action);
            reward_sums.push(t.reward_sum);
            discounts.push(t.discount);
        }
        Ok(Batch {
            obs: Tensor { shape: obs_shape.clone(), data: obs },
            actions,
            reward_sums,
            discounts,
            bootstrap_obs: Tensor { shape: obs_shape, data: boot },
            weights: sample.weights.clone(),
        })
    }
}
