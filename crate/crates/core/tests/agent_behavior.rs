//! Behavioral contract of the DQN learner.

use plastic_rl::agent::{Activation, AgentConfig, Batch, ConvSpec, DqnAgent, QNetworkConfig};
use plastic_rl::envs::{Env, EnvSpec, GameKind, ModeParams, TaskDef};
use plastic_rl::numerics::Tensor;
use plastic_rl::replay::{NStepAssembler, ReplayBuffer, ReplayConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OBS_SHAPE: (usize, usize, usize) = (4, 10, 10);
const ACTIONS: usize = 3;

fn tiny_config() -> AgentConfig {
    AgentConfig {
        network: QNetworkConfig {
            // Stride 1 keeps the bottom row (the paddle) inside the conv's
            // receptive field; a lone stride-2 layer on 10x10 would not.
            conv: vec![ConvSpec { channels: 4, kernel: 3, stride: 1 }],
            hidden: 12,
            ..Default::default()
        },
        batch_size: 8,
        ..Default::default()
    }
}

fn agent(seed: u64) -> DqnAgent {
    DqnAgent::new(tiny_config(), OBS_SHAPE, ACTIONS, seed).unwrap()
}

fn random_obs(rng: &mut ChaCha8Rng) -> Tensor {
    let (c, h, w) = OBS_SHAPE;
    let mut t = Tensor::zeros(&[c, h, w]);
    for _ in 0..6 {
        let i = rng.gen_range(0..t.len());
        t.data[i] = 1.0;
    }
    t
}

fn random_batch(rng: &mut ChaCha8Rng, size: usize, reward: f64, discount: f64) -> Batch {
    let (c, h, w) = OBS_SHAPE;
    let mut obs = Vec::new();
    let mut boot = Vec::new();
    for _ in 0..size {
        obs.extend_from_slice(&random_obs(rng).data);
        boot.extend_from_slice(&random_obs(rng).data);
    }
    Batch {
        obs: Tensor { shape: vec![size, c, h, w], data: obs },
        actions: (0..size).map(|i| i % ACTIONS).collect(),
        reward_sums: vec![reward; size],
        discounts: vec![discount; size],
        bootstrap_obs: Tensor { shape: vec![size, c, h, w], data: boot },
        weights: vec![1.0; size],
    }
}

/// Zero the output heads so every Q-value is an exact constant `v`.
fn pin_q_to(agent: &mut DqnAgent, v: f64) {
    for name in ["value_out.w", "value_out.b", "adv_out.w", "adv_out.b"] {
        let idx = agent.params().index_of(name).unwrap();
        let t = agent.params_mut().value_mut(idx);
        t.data.fill(0.0);
    }
    let idx = agent.params().index_of("value_out.b").unwrap();
    agent.params_mut().value_mut(idx).data.fill(v);
    agent.sync_target();
}

#[test]
fn greedy_selection_is_argmax_with_low_tie() {
    let mut a = agent(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let obs = random_obs(&mut rng);
    let q = a.q_values(&obs).unwrap();
    let argmax = q
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .unwrap()
        .0;
    for _ in 0..5 {
        assert_eq!(a.select_action(&obs, 0.0, ACTIONS).unwrap(), argmax);
    }
    // All-equal Q-values tie-break to action 0.
    pin_q_to(&mut a, 1.5);
    assert_eq!(a.select_action(&obs, 0.0, ACTIONS).unwrap(), 0);
}

#[test]
fn full_exploration_is_uniform() {
    let mut a = agent(7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let obs = random_obs(&mut rng);
    let mut counts = [0usize; ACTIONS];
    let draws = 10_000;
    for _ in 0..draws {
        counts[a.select_action(&obs, 1.0, ACTIONS).unwrap()] += 1;
    }
    for c in counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 1.0 / 3.0).abs() < 0.02, "frequency {freq}");
    }
}

#[test]
fn targets_bootstrap_through_target_net() {
    let mut a = agent(13);
    pin_q_to(&mut a, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    // reward 1, discount 0.99, max target-Q 2 -> 2.98.
    let batch = random_batch(&mut rng, 8, 1.0, 0.99);
    for y in a.compute_targets(&batch).unwrap() {
        assert!((y - 2.98).abs() < 1e-12);
    }

    // Terminal window: discount exactly 0 -> y = reward.
    let batch = random_batch(&mut rng, 8, 1.0, 0.0);
    for y in a.compute_targets(&batch).unwrap() {
        assert_eq!(y, 1.0);
    }

    // Zero-initialized output heads -> y = reward exactly.
    let mut fresh = agent(19);
    pin_q_to(&mut fresh, 0.0);
    let batch = random_batch(&mut rng, 8, 0.625, 0.99);
    for y in fresh.compute_targets(&batch).unwrap() {
        assert_eq!(y, 0.625);
    }
}

#[test]
fn perfect_predictions_leave_weights_untouched() {
    let mut a = agent(23);
    pin_q_to(&mut a, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    // Terminal transitions with reward 0: target 0 equals prediction 0.
    let batch = random_batch(&mut rng, 8, 0.0, 0.0);
    let before = a.params().content_hash();
    let (report, _) = a.learn_step(&batch, false).unwrap();
    assert_eq!(report.loss, 0.0);
    assert_eq!(a.params().content_hash(), before);
}

#[test]
fn zero_importance_weights_freeze_the_update() {
    let mut a = agent(31);
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut batch = random_batch(&mut rng, 8, 1.0, 0.9);
    batch.weights = vec![0.0; 8];
    let before = a.params().content_hash();
    let (report, _) = a.learn_step(&batch, false).unwrap();
    assert_eq!(report.loss, 0.0);
    assert_eq!(a.params().content_hash(), before);
}

#[test]
fn sync_target_copies_and_is_idempotent() {
    let mut a = agent(41);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let batch = random_batch(&mut rng, 8, 1.0, 0.9);
    let target_before = a.target_params().content_hash();
    for _ in 0..5 {
        a.learn_step(&batch, false).unwrap();
    }
    // Between syncs the target is never mutated.
    assert_eq!(a.target_params().content_hash(), target_before);
    assert_ne!(a.params().content_hash(), target_before);

    a.sync_target();
    assert_eq!(a.target_params().content_hash(), a.params().content_hash());
    let once = a.target_params().content_hash();
    a.sync_target();
    assert_eq!(a.target_params().content_hash(), once);

    // After a sync, targets computed with either network agree.
    let y_target = a.compute_targets(&batch).unwrap();
    let q_online = a
        .network()
        .forward_values(a.params(), &batch.bootstrap_obs)
        .unwrap()
        .q;
    for (i, y) in y_target.iter().enumerate() {
        let row = &q_online.data[i * ACTIONS..(i + 1) * ACTIONS];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(*y, 1.0 + 0.9 * max);
    }
}

#[test]
fn greedy_choice_invariant_to_positive_scaling_and_value_shift() {
    let mut a = agent(47);
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let obs: Vec<Tensor> = (0..20).map(|_| random_obs(&mut rng)).collect();
    let before: Vec<usize> = obs.iter().map(|o| a.select_action(o, 0.0, ACTIONS).unwrap()).collect();
    let q_before: Vec<Vec<f64>> = obs.iter().map(|o| a.q_values(o).unwrap()).collect();

    // Scale both output heads by 3: Q scales by 3, greedy unchanged.
    for name in ["value_out.w", "value_out.b", "adv_out.w", "adv_out.b"] {
        let idx = a.params().index_of(name).unwrap();
        for v in a.params_mut().value_mut(idx).data.iter_mut() {
            *v *= 3.0;
        }
    }
    let after: Vec<usize> = obs.iter().map(|o| a.select_action(o, 0.0, ACTIONS).unwrap()).collect();
    assert_eq!(before, after);

    // Add a constant to the value head bias: Q shifts by that constant.
    let idx = a.params().index_of("value_out.b").unwrap();
    for v in a.params_mut().value_mut(idx).data.iter_mut() {
        *v += 0.75;
    }
    for (o, qb) in obs.iter().zip(q_before.iter()) {
        let qa = a.q_values(o).unwrap();
        for (x, y) in qa.iter().zip(qb.iter()) {
            assert!((x - (3.0 * y + 0.75)).abs() < 1e-9, "{x} vs {}", 3.0 * y + 0.75);
        }
    }
    let shifted: Vec<usize> = obs.iter().map(|o| a.select_action(o, 0.0, ACTIONS).unwrap()).collect();
    assert_eq!(before, shifted);
}

#[test]
fn learn_is_deterministic_given_seed() {
    let run = || {
        let mut a = agent(59);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..10 {
            let batch = random_batch(&mut rng, 8, 0.5, 0.9);
            a.learn_step(&batch, false).unwrap();
        }
        a.params().content_hash()
    };
    assert_eq!(run(), run());
}

#[test]
fn overfits_a_frozen_catch_buffer() {
    // Sanity oracle: 2000 learn steps on a fixed 100-transition buffer must
    // cut the loss by at least 10x from its initial value.
    let task = TaskDef::new(EnvSpec::new("catch", GameKind::Catch), ModeParams::identity());
    let mut env = Env::new(task).unwrap();
    let mut asm = NStepAssembler::new(3, 0.99).unwrap();
    let mut buffer = ReplayBuffer::new(
        ReplayConfig { capacity: 128, min_history: 1, ..Default::default() },
        5,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut obs = env.reset(rng.gen());
    let mut stored = 0usize;
    while stored < 100 {
        let action = rng.gen_range(0..3);
        let out = env.step(action).unwrap();
        for t in asm.on_step(&obs.to_tensor(), action, out.reward, &out.obs.to_tensor(), out.terminal) {
            if stored < 100 {
                buffer.push(t);
                stored += 1;
            }
        }
        obs = if out.terminal { env.reset(rng.gen()) } else { out.obs };
    }
    assert_eq!(buffer.len(), 100);

    let mut cfg = tiny_config();
    cfg.batch_size = 32;
    cfg.target_sync_period = 200;
    let mut a = DqnAgent::new(cfg, OBS_SHAPE, ACTIONS, 71).unwrap();
    let mut first = None;
    let mut last_hundred = Vec::new();
    for step in 0..2000 {
        let sample = buffer.sample(32, 0.4).unwrap();
        let batch = Batch::from_replay(&buffer, &sample).unwrap();
        let (report, _) = a.learn_step(&batch, false).unwrap();
        buffer.update_priorities(&sample.indices, &report.td_errors).unwrap();
        if first.is_none() {
            first = Some(report.loss);
        }
        if step >= 1900 {
            last_hundred.push(report.loss);
        }
    }
    let first = first.unwrap();
    let tail = last_hundred.iter().sum::<f64>() / last_hundred.len() as f64;
    assert!(
        tail * 10.0 <= first,
        "loss did not shrink 10x: first {first:.6}, tail mean {tail:.6}"
    );
}
