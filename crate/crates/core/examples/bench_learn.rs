use plastic_rl::agent::{AgentConfig, Batch, DqnAgent};
use plastic_rl::envs::{Env, EnvSpec, GameKind, ModeParams, TaskDef};
use plastic_rl::replay::{NStepAssembler, ReplayBuffer, ReplayConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let task = TaskDef::new(EnvSpec::new("catch", GameKind::Catch), ModeParams::identity());
    let mut env = Env::new(task).unwrap();
    let mut asm = NStepAssembler::new(3, 0.99).unwrap();
    let mut buffer = ReplayBuffer::new(ReplayConfig { capacity: 8192, min_history: 1, ..Default::default() }, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut obs = env.reset(rng.gen());
    for _ in 0..4000 {
        let action = rng.gen_range(0..3);
        let out = env.step(action).unwrap();
        for t in asm.on_step(&obs.to_tensor(), action, out.reward, &out.obs.to_tensor(), out.terminal) {
            buffer.push(t);
        }
        obs = if out.terminal { env.reset(rng.gen()) } else { out.obs };
    }
    let mut agent = DqnAgent::new(AgentConfig::default(), (4, 10, 10), 3, 71).unwrap();

    // env step + select_action speed
    let t0 = Instant::now();
    let mut n = 0u64;
    for _ in 0..20000 {
        let a = agent.select_action(&obs.to_tensor(), 0.05, 3).unwrap();
        let out = env.step(a).unwrap();
        obs = if out.terminal { env.reset(rng.gen()) } else { out.obs };
        n += 1;
    }
    println!("act+step: {:.1} us/frame", t0.elapsed().as_secs_f64() * 1e6 / n as f64);

    // batch assembly
    let t0 = Instant::now();
    for _ in 0..2000 {
        let s = buffer.sample(32, 0.4).unwrap();
        let b = Batch::from_replay(&buffer, &s).unwrap();
        std::hint::black_box(&b);
    }
    println!("sample+assemble: {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 2000.0);

    // learn step
    let s = buffer.sample(32, 0.4).unwrap();
    let b = Batch::from_replay(&buffer, &s).unwrap();
    let t0 = Instant::now();
    for _ in 0..2000 {
        let (r, _) = agent.learn_step(&b, false).unwrap();
        std::hint::black_box(r.loss);
    }
    println!("learn_step: {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 2000.0);

    // targets only
    let t0 = Instant::now();
    for _ in 0..2000 {
        let y = agent.compute_targets(&b).unwrap();
        std::hint::black_box(&y);
    }
    println!("compute_targets: {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 2000.0);

    // evaluate_loss (traced forward, no backward)
    let t0 = Instant::now();
    for _ in 0..2000 {
        let l = agent.evaluate_loss(&b).unwrap();
        std::hint::black_box(l);
    }
    println!("evaluate_loss(fwd traced + targets): {:.1} us", t0.elapsed().as_secs_f64() * 1e6 / 2000.0);
}
