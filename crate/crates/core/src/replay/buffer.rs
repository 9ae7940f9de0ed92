//! Prioritized ring buffer.

use super::stored::Transition;
use super::sum_tree::SumTree;
use crate::error::{Error, Result};
use crate::util::{derive_seed, stream};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// n-step window length.
    pub n_step: usize,
    /// Priority exponent; 0 degenerates to uniform sampling.
    pub alpha: f64,
    /// Importance-sampling exponent, fixed (no annealing).
    pub beta: f64,
    /// Added to |td| before the alpha power so priorities never reach zero.
    pub priority_epsilon: f64,
    /// Transitions required before learning starts.
    pub min_history: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            n_step: 3,
            alpha: 0.5,
            beta: 0.4,
            priority_epsilon: 0.01,
            min_history: 1_000,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if self.capacity < batch_size {
            return Err(Error::config(format!(
                "replay capacity {} below batch size {batch_size}",
                self.capacity
            )));
        }
        if self.n_step == 0 {
            return Err(Error::config("n_step must be at least 1"));
        }
        if self.alpha < 0.0 || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config("alpha must be >= 0 and beta in [0, 1]"));
        }
        if self.priority_epsilon <= 0.0 {
            return Err(Error::config("priority_epsilon must be positive"));
        }
        Ok(())
    }
}

/// Indices and importance weights for one sampled mini-batch.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Ring buffer with proportional prioritized sampling.
pub struct ReplayBuffer {
    config: ReplayConfig,
    slots: Vec<Transition>,
    cursor: usize,
    tree: SumTree,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(config: ReplayConfig, seed: u64) -> Self {
        let tree = SumTree::new(config.capacity);
        ReplayBuffer {
            config,
            slots: Vec::new(),
            cursor: 0,
            tree,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::REPLAY)),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.slots[index]
    }

    /// Store a transition, overwriting the oldest slot when full. The new
    /// slot takes the current maximum priority (1.0 into an empty buffer)
    /// so it is sampled at least once.
    pub fn push(&mut self, transition: Transition) {
        let priority = if self.slots.is_empty() {
            1.0
        } else {
            self.tree.max_priority()
        };
        if self.slots.len() < self.config.capacity {
            self.slots.push(transition);
            let idx = self.slots.len() - 1;
            self.tree.set(idx, priority);
        } else {
            self.slots[self.cursor] = transition;
            self.tree.set(self.cursor, priority);
        }
        self.cursor = (self.cursor + 1) % self.config.capacity;
    }

    /// Proportional sample using the buffer's own random stream.
    pub fn sample(&mut self, batch_size: usize, beta: f64) -> Result<SampleBatch> {
        let mut rng = self.rng.clone();
        let out = self.sample_with_rng(&mut rng, batch_size, beta);
        self.rng = rng;
        out
    }

    /// Proportional sample with an external random stream; the buffer is
    /// untouched, which keeps diagnostic probes out of the training stream.
    pub fn sample_with_rng(
        &self,
        rng: &mut ChaCha8Rng,
        batch_size: usize,
        beta: f64,
    ) -> Result<SampleBatch> {
        if self.slots.is_empty() {
            return Err(Error::usage("sample on an empty replay buffer"));
        }
        if self.slots.len() < batch_size {
            return Err(Error::usage(format!(
                "buffer holds {} transitions, need {batch_size}",
                self.slots.len()
            )));
        }
        let total = self.tree.total();
        let n = self.slots.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let u = rng.gen_range(0.0..1.0) * total;
            let leaf = self.tree.select(u);
            debug_assert!(leaf < self.slots.len(), "selected an empty slot");
            let prob = self.tree.priority(leaf) / total;
            indices.push(leaf);
            weights.push((n * prob).powf(-beta));
        }
        let w_max = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in weights.iter_mut() {
            *w /= w_max;
        }
        Ok(SampleBatch { indices, weights })
    }

    /// priority <- (|td| + epsilon)^alpha. A stale index silently updates
    /// the slot's current occupant.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::usage("indices and td_errors length mismatch"));
        }
        for (&i, &td) in indices.iter().zip(td_errors.iter()) {
            if i >= self.slots.len() {
                return Err(Error::usage(format!("priority index {i} out of range")));
            }
            let p = (td.abs() + self.config.priority_epsilon).powf(self.config.alpha);
            self.tree.set(i, p);
        }
        Ok(())
    }

    /// Direct leaf write, for tests and oracle comparisons.
    pub fn set_priority_raw(&mut self, index: usize, priority: f64) {
        self.tree.set(index, priority);
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Hash over every stored transition, in slot order.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xCBF29CE484222325;
        for t in &self.slots {
            h ^= t.content_hash();
            h = h.wrapping_mul(0x100000001B3);
        }
        h ^ (self.slots.len() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::replay::stored::StoredObs;

    fn t(tag: f64) -> Transition {
        Transition {
            obs: StoredObs::pack(&Tensor::vector(&[tag])),
            action: 0,
            reward_sum: tag,
            bootstrap_obs: StoredObs::pack(&Tensor::vector(&[tag + 1.0])),
            discount: 0.9,
            terminal: false,
        }
    }

    fn small_buffer(capacity: usize) -> ReplayBuffer {
        let config = ReplayConfig { capacity, min_history: 1, ..Default::default() };
        ReplayBuffer::new(config, 99)
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = small_buffer(2);
        buf.push(t(1.0));
        buf.push(t(2.0));
        buf.push(t(3.0));
        assert_eq!(buf.len(), 2);
        let rewards: Vec<f64> = (0..2).map(|i| buf.get(i).reward_sum).collect();
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0));
    }

    #[test]
    fn first_push_gets_unit_priority_then_max_propagates() {
        let mut buf = small_buffer(8);
        buf.push(t(1.0));
        assert_eq!(buf.tree().priority(0), 1.0);
        buf.update_priorities(&[0], &[3.99]).unwrap();
        let p0 = buf.tree().priority(0);
        assert!((p0 - 4.0f64.powf(0.5)).abs() < 1e-12);
        buf.push(t(2.0));
        assert_eq!(buf.tree().priority(1), p0, "new transition takes the live maximum");
    }

    #[test]
    fn zero_td_keeps_positive_priority() {
        let mut buf = small_buffer(4);
        buf.push(t(1.0));
        let mut cfg = buf.config.clone();
        cfg.alpha = 1.0;
        buf.config = cfg;
        buf.update_priorities(&[0], &[0.0]).unwrap();
        assert_eq!(buf.tree().priority(0), 0.01);
    }

    #[test]
    fn uniform_weights_when_alpha_zero() {
        let mut buf = small_buffer(16);
        for i in 0..10 {
            buf.push(t(i as f64));
        }
        // alpha = 0: every priority update lands on 1.
        buf.config.alpha = 0.0;
        let idx: Vec<usize> = (0..10).collect();
        buf.update_priorities(&idx, &vec![2.5; 10]).unwrap();
        let batch = buf.sample(8, 0.4).unwrap();
        for w in batch.weights {
            assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn empty_buffer_sample_is_usage_error() {
        let mut buf = small_buffer(4);
        assert!(buf.sample(1, 0.4).is_err());
    }

    #[test]
    fn sampling_frequencies_track_priorities() {
        let mut buf = small_buffer(4);
        for i in 0..3 {
            buf.push(t(i as f64));
        }
        buf.set_priority_raw(0, 1.0);
        buf.set_priority_raw(1, 2.0);
        buf.set_priority_raw(2, 3.0);
        let mut counts = [0usize; 3];
        let draws = 60_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..draws {
            let b = buf.sample_with_rng(&mut rng, 1, 0.4).unwrap();
            counts[b.indices[0]] += 1;
        }
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for i in 0..3 {
            let freq = counts[i] as f64 / draws as f64;
            assert!(
                (freq - expect[i]).abs() < 0.01,
                "leaf {i}: {freq:.4} vs {:.4}",
                expect[i]
            );
        }
    }

    #[test]
    fn pushes_never_clear_existing_contents() {
        let mut buf = small_buffer(64);
        for i in 0..10 {
            buf.push(t(i as f64));
        }
        let before = buf.content_hash();
        // A schedule boundary is nothing to the buffer: pushing more data
        // is the only mutation and prior slots stay put.
        buf.push(t(99.0));
        for i in 0..10 {
            assert_eq!(buf.get(i).reward_sum, i as f64);
        }
        assert_ne!(buf.content_hash(), before);
    }
}
