//! n-step return assembly.

use super::stored::{StoredObs, Transition};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use std::collections::VecDeque;

/// Discounted sum over a (possibly truncated) reward window plus the
/// discount to apply at the bootstrap state: gamma^len, or exactly 0 when
/// the window hit a terminal.
pub fn nstep_return(rewards: &[f64], gamma: f64, terminal_within: bool) -> Result<(f64, f64)> {
    if rewards.is_empty() {
        return Err(Error::usage("nstep_return: empty reward window"));
    }
    let mut sum = 0.0;
    let mut g = 1.0;
    for &r in rewards {
        sum += g * r;
        g *= gamma;
    }
    let discount = if terminal_within { 0.0 } else { g };
    Ok((sum, discount))
}

struct Pending {
    obs: Tensor,
    action: usize,
    rewards: Vec<f64>,
}

/// Rolls environment steps into n-step transitions.
///
/// Windows that reach n rewards bootstrap at the current observation with
/// discount gamma^n; a terminal drains every pending window with discount
/// zero; a truncation (episode cap or task switch) drains them bootstrapping
/// at the cut with discount gamma^len.
pub struct NStepAssembler {
    n: usize,
    gamma: f64,
    pending: VecDeque<Pending>,
}

impl NStepAssembler {
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n-step length must be at least 1"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma must be in [0, 1), got {gamma}")));
        }
        Ok(NStepAssembler { n, gamma, pending: VecDeque::new() })
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Record one environment step and emit any completed transitions.
    pub fn on_step(
        &mut self,
        obs: &Tensor,
        action: usize,
        reward: f64,
        next_obs: &Tensor,
        terminal: bool,
    ) -> Vec<Transition> {
        self.pending.push_back(Pending {
            obs: obs.clone(),
            action,
            rewards: Vec::with_capacity(self.n),
        });
        for p in self.pending.iter_mut() {
            p.rewards.push(reward);
        }

        let mut out = Vec::new();
        if terminal {
            let boot = StoredObs::pack(next_obs);
            while let Some(p) = self.pending.pop_front() {
                let (sum, discount) = nstep_return(&p.rewards, self.gamma, true).expect("non-empty");
                out.push(Transition {
                    obs: StoredObs::pack(&p.obs),
                    action: p.action,
                    reward_sum: sum,
                    bootstrap_obs: boot.clone(),
                    discount,
                    terminal: true,
                });
            }
        } else if self.pending.front().map(|p| p.rewards.len()) == Some(self.n) {
            let p = self.pending.pop_front().expect("front exists");
            let (sum, discount) = nstep_return(&p.rewards, self.gamma, false).expect("non-empty");
            out.push(Transition {
                obs: StoredObs::pack(&p.obs),
                action: p.action,
                reward_sum: sum,
                bootstrap_obs: StoredObs::pack(next_obs),
                discount,
                terminal: false,
            });
        }
        out
    }

    /// Drain pending windows at a truncation point, bootstrapping at `cut`.
    pub fn flush_truncated(&mut self, cut: &Tensor) -> Vec<Transition> {
        let boot = StoredObs::pack(cut);
        let mut out = Vec::new();
        while let Some(p) = self.pending.pop_front() {
            let (sum, discount) = nstep_return(&p.rewards, self.gamma, false).expect("non-empty");
            out.push(Transition {
                obs: StoredObs::pack(&p.obs),
                action: p.action,
                reward_sum: sum,
                bootstrap_obs: boot.clone(),
                discount,
                terminal: false,
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_arithmetic() {
        let (sum, discount) = nstep_return(&[1.0, 1.0, 1.0], 0.9, false).unwrap();
        assert!((sum - 2.71).abs() < 1e-12);
        assert!((discount - 0.729).abs() < 1e-12);
    }

    #[test]
    fn terminal_window_zeroes_discount() {
        let (sum, discount) = nstep_return(&[1.0, 2.0], 0.9, true).unwrap();
        assert!((sum - 2.8).abs() < 1e-12);
        assert_eq!(discount, 0.0);
    }

    #[test]
    fn single_step_degenerates() {
        let (sum, discount) = nstep_return(&[0.5], 0.9, false).unwrap();
        assert_eq!(sum, 0.5);
        assert_eq!(discount, 0.9);
    }

    #[test]
    fn empty_window_rejected() {
        assert!(nstep_return(&[], 0.9, false).is_err());
    }

    #[test]
    fn assembler_emits_after_n_steps_and_drains_on_terminal() {
        let mut asm = NStepAssembler::new(3, 0.9).unwrap();
        let obs = |v: f64| Tensor::vector(&[v]);
        assert!(asm.on_step(&obs(0.0), 0, 1.0, &obs(1.0), false).is_empty());
        assert!(asm.on_step(&obs(1.0), 1, 1.0, &obs(2.0), false).is_empty());
        let done = asm.on_step(&obs(2.0), 2, 1.0, &obs(3.0), false);
        assert_eq!(done.len(), 1);
        assert!((done[0].reward_sum - 2.71).abs() < 1e-12);
        assert!((done[0].discount - 0.729).abs() < 1e-12);
        assert_eq!(done[0].bootstrap_obs.unpack().data, vec![3.0]);

        // A terminal drains every pending window with discount 0. Windows
        // at that point: obs(2) with [1,2,5], obs(3) with [2,5], obs(4)
        // with [5].
        let t1 = asm.on_step(&obs(3.0), 0, 2.0, &obs(4.0), false);
        assert_eq!(t1.len(), 1);
        let drained = asm.on_step(&obs(4.0), 1, 5.0, &obs(5.0), true);
        assert_eq!(drained.len(), 3);
        for t in &drained {
            assert!(t.terminal);
            assert_eq!(t.discount, 0.0);
        }
        assert!((drained[0].reward_sum - (1.0 + 0.9 * 2.0 + 0.81 * 5.0)).abs() < 1e-12);
        assert!((drained[1].reward_sum - (2.0 + 0.9 * 5.0)).abs() < 1e-12);
        assert_eq!(drained[2].reward_sum, 5.0);
        assert_eq!(asm.pending_len(), 0);
    }

    #[test]
    fn truncation_bootstraps_with_partial_discount() {
        let mut asm = NStepAssembler::new(3, 0.5).unwrap();
        let obs = |v: f64| Tensor::vector(&[v]);
        asm.on_step(&obs(0.0), 0, 1.0, &obs(1.0), false);
        asm.on_step(&obs(1.0), 1, 1.0, &obs(2.0), false);
        let out = asm.flush_truncated(&obs(2.0));
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].discount, 0.25); // two rewards seen
        assert_eq!(out[1].discount, 0.5); // one reward seen
        assert!(!out[0].terminal);
        assert_eq!(out[0].bootstrap_obs.unpack().data, vec![2.0]);
    }
}
