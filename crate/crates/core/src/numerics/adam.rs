//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    /// Moment tensors are created zeroed, shape-matched to `params`.
    pub fn new(hyper: AdamHyper, params: &ParamStore) -> Self {
        let m = (0..params.len()).map(|i| Tensor::zeros(&params.value(i).shape)).collect();
        let v = (0..params.len()).map(|i| Tensor::zeros(&params.value(i).shape)).collect();
        AdamState { hyper, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, idx: usize) -> &Tensor {
        &self.m[idx]
    }
}

/// One bias-corrected Adam update applied in place.
///
/// `grads[i]` must shape-match `params.value(i)`. A non-finite gradient
/// aborts with a diagnostic naming the parameter, leaving nothing updated.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::usage(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for i in 0..params.len() {
        if grads[i].shape != params.value(i).shape {
            return Err(Error::shape(
                format!("adam_step gradient for {}", params.name(i)),
                format!("{:?}", params.value(i).shape),
                format!("{:?}", grads[i].shape),
            ));
        }
        if !grads[i].all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", params.name(i))));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for i in 0..params.len() {
        let w = &mut params.value_mut(i).data[..];
        let n = w.len();
        let g = &grads[i].data[..n];
        let m = &mut state.m[i].data[..n];
        let v = &mut state.v[i].data[..n];
        for j in 0..n {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            w[j] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.push("w", Tensor::vector(&[value]));
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias correction makes m_hat = g and v_hat = g^2 on step one, so the
        // update is -lr * sign(g) up to epsilon effects.
        let mut params = single_param(0.0);
        let hyper = AdamHyper { learning_rate: 0.1, ..Default::default() };
        let mut state = AdamState::new(hyper, &params);
        adam_step(&mut params, &[Tensor::vector(&[4.0])], &mut state).unwrap();
        let w = params.value(0).data[0];
        assert!((w + 0.1).abs() < 1e-8, "w = {w}");
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(AdamHyper::default(), &params);
        for _ in 0..10 {
            adam_step(&mut params, &[Tensor::vector(&[0.0])], &mut state).unwrap();
        }
        assert_eq!(params.value(0).data[0], 1.5);
        assert_eq!(state.first_moment(0).data[0], 0.0);
    }

    #[test]
    fn quadratic_descent_reaches_minimum() {
        // 100 steps on f(w) = (w - 3)^2 from w = 0 at lr 0.05, checked
        // against an independent scalar trace of the same recurrence.
        let mut params = single_param(0.0);
        let hyper = AdamHyper { learning_rate: 0.05, ..Default::default() };
        let mut state = AdamState::new(hyper, &params);

        let (b1, b2) = (0.9f64, 0.999f64);
        let (mut w_ref, mut m_ref, mut v_ref) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (params.value(0).data[0] - 3.0);
            adam_step(&mut params, &[Tensor::vector(&[g])], &mut state).unwrap();

            let g_ref = 2.0 * (w_ref - 3.0);
            m_ref = b1 * m_ref + (1.0 - b1) * g_ref;
            v_ref = b2 * v_ref + (1.0 - b2) * g_ref * g_ref;
            let m_hat = m_ref / (1.0 - b1.powi(t));
            let v_hat = v_ref / (1.0 - b2.powi(t));
            w_ref -= 0.05 * m_hat / (v_hat.sqrt() + 1e-8);

            assert_eq!(params.value(0).data[0], w_ref, "diverged at step {t}");
        }
        assert!((params.value(0).data[0] - 3.0).abs() < 0.5);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = ParamStore::new();
        params.push("conv1.w", Tensor::vector(&[1.0]));
        let mut state = AdamState::new(AdamHyper::default(), &params);
        let err = adam_step(&mut params, &[Tensor::vector(&[f64::NAN])], &mut state).unwrap_err();
        assert!(err.to_string().contains("conv1.w"), "{err}");
    }

    #[test]
    fn step_counter_increments_once_per_update() {
        let mut params = single_param(0.0);
        let mut state = AdamState::new(AdamHyper::default(), &params);
        for expected in 1..=5u64 {
            adam_step(&mut params, &[Tensor::vector(&[1.0])], &mut state).unwrap();
            assert_eq!(state.step_count(), expected);
        }
    }
}
