use plastic_rl::agent::{AgentConfig, Batch, DqnAgent};
use plastic_rl::envs::{Env, EnvSpec, GameKind, ModeParams, TaskDef};
use plastic_rl::replay::{NStepAssembler, ReplayBuffer, ReplayConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

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
    let s = buffer.sample(32, 0.4).unwrap();
    let b = Batch::from_replay(&buffer, &s).unwrap();
    for _ in 0..1000 {
        let (r, _) = agent.learn_step(&b, false).unwrap();
        std::hint::black_box(r.loss);
    }
}
