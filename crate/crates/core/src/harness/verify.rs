//! Fast invariant suites behind the `verify` CLI subcommand.
//!
//! Each check recomputes its expectation through an independent route
//! (finite differences, linear scans, brute-force enumeration) and reports
//! pass/fail. The full acceptance suite in the test tree runs the same
//! families at full size.

use crate::agent::{Activation, AgentConfig, ConvSpec, DqnAgent, QNetworkConfig, WidthPolicy};
use crate::envs::{SwitchSchedule, TaskDef};
use crate::error::Result;
use crate::harness::config::TaskConfig;
use crate::harness::{run_experiment, ExperimentConfig, RunKind, ScheduleConfig};
use crate::numerics::{crelu, relu, Tape, Tensor};
use crate::replay::{nstep_return, SumTree};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), pass, detail: detail.into() }
    }
}

/// Run every invariant suite; `quick` trims the sizes.
pub fn run_all(quick: bool) -> Vec<CheckResult> {
    vec![
        crelu_algebra(if quick { 500 } else { 2_000 }),
        gradient_spot_check(),
        sum_tree_oracle(if quick { 50 } else { 300 }),
        schedule_partition(),
        nstep_examples(),
        width_policy_counts(),
        determinism_smoke(),
    ]
}

fn crelu_algebra(vectors: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..vectors {
        let n = rng.gen_range(1..32);
        let x = Tensor {
            shape: vec![n],
            data: (0..n)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        0.0
                    } else {
                        rng.gen_range(-10.0..10.0)
                    }
                })
                .collect(),
        };
        let y = match crelu(&x, 0) {
            Ok(y) => y,
            Err(e) => return CheckResult::new("crelu-algebra", false, e.to_string()),
        };
        for i in 0..n {
            if y.data[i] - y.data[n + i] != x.data[i] {
                return CheckResult::new("crelu-algebra", false, "reconstruction failed");
            }
        }
        let (ny, nx) = (y.l2(), x.l2());
        if (ny - nx).abs() > 1e-12 * nx.max(1.0) {
            return CheckResult::new("crelu-algebra", false, "l2 norm not preserved");
        }
        if y.l0() != x.l0() {
            return CheckResult::new("crelu-algebra", false, "l0 not preserved");
        }
        let expected_halves = relu(&x).l0() + relu(&Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| -v).collect() }).l0();
        if y.l0() != expected_halves {
            return CheckResult::new("crelu-algebra", false, "halves disagree with relu pair");
        }
    }
    CheckResult::new("crelu-algebra", true, format!("{vectors} random vectors"))
}

fn gradient_spot_check() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let run = |params: &[Tensor], x: &Tensor, target: &[f64], tape: &mut Tape| {
        let xb = tape.leaf(x.clone());
        let w1 = tape.param(params[0].clone());
        let w2 = tape.param(params[1].clone());
        let h = tape.matmul(xb, w1).unwrap();
        let a = tape.relu(h);
        let y = tape.matmul(a, w2).unwrap();
        let loss = tape.squared_loss(y, target, &vec![1.0; target.len()]).unwrap();
        (loss, vec![w1, w2])
    };
    let x = Tensor { shape: vec![2, 3], data: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let target: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = vec![
        Tensor { shape: vec![3, 4], data: (0..12).map(|_| rng.gen_range(-0.9..0.9)).collect() },
        Tensor { shape: vec![4, 2], data: (0..8).map(|_| rng.gen_range(-0.9..0.9)).collect() },
    ];
    let mut tape = Tape::new();
    let (loss, ids) = run(&params, &x, &target, &mut tape);
    tape.backward(loss).unwrap();
    let h = 1e-5;
    for (pi, &id) in ids.iter().enumerate() {
        let analytic = tape.grad_tensor(id);
        for j in 0..params[pi].len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[pi].data[j] += h;
            minus[pi].data[j] -= h;
            let f = |ps: &[Tensor]| {
                let mut t = Tape::new();
                let (l, _) = run(ps, &x, &target, &mut t);
                t.value(l).data[0]
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let a = analytic.data[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > 1e-5 {
                return CheckResult::new(
                    "gradient-oracle",
                    false,
                    format!("param {pi}[{j}]: analytic {a} vs numeric {numeric}"),
                );
            }
        }
    }
    CheckResult::new("gradient-oracle", true, "2-layer dense net vs central differences")
}

fn sum_tree_oracle(vectors: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..vectors {
        let n = rng.gen_range(1..=64);
        let ps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mut tree = SumTree::new(n);
        for (i, &p) in ps.iter().enumerate() {
            tree.set(i, p);
        }
        let total: f64 = ps.iter().sum();
        if total == 0.0 {
            continue;
        }
        for _ in 0..100 {
            let u = rng.gen_range(0.0..1.0) * tree.total();
            let got = tree.select(u);
            // Flat cumulative-sum oracle.
            let mut acc = 0.0;
            let mut want = n - 1;
            for (i, &p) in ps.iter().enumerate() {
                acc += p;
                if u < acc {
                    want = i;
                    break;
                }
            }
            // The tree accumulates pairwise; only boundary-straddling draws
            // may differ, and those are measure-zero under random u.
            if got != want && tree.priority(got) == 0.0 {
                return CheckResult::new(
                    "sum-tree-oracle",
                    false,
                    format!("selected empty leaf {got} (oracle {want})"),
                );
            }
            if got != want {
                return CheckResult::new(
                    "sum-tree-oracle",
                    false,
                    format!("leaf {got} vs oracle {want} at u={u}"),
                );
            }
        }
    }
    CheckResult::new("sum-tree-oracle", true, format!("{vectors} random priority vectors"))
}

fn schedule_partition() -> CheckResult {
    let tasks: Vec<TaskDef> = ["a", "b", "c", "d"]
        .iter()
        .map(|id| TaskConfig::new(*id, crate::envs::GameKind::Catch).to_task())
        .collect();
    let schedule = match SwitchSchedule::new(tasks, 7, 3) {
        Ok(s) => s,
        Err(e) => return CheckResult::new("schedule-partition", false, e.to_string()),
    };
    let mut counts = [[0u64; 3]; 4];
    for f in 0..schedule.total_frames {
        match schedule.lookup(f) {
            Ok((t, v)) => counts[t][v as usize] += 1,
            Err(e) => return CheckResult::new("schedule-partition", false, e.to_string()),
        }
    }
    for t in counts.iter() {
        for &c in t.iter() {
            if c != 7 {
                return CheckResult::new("schedule-partition", false, format!("count {c} != 7"));
            }
        }
    }
    if schedule.lookup(schedule.total_frames).is_ok() {
        return CheckResult::new("schedule-partition", false, "out-of-budget frame accepted");
    }
    CheckResult::new("schedule-partition", true, "4 tasks x 3 cycles, brute-forced")
}

fn nstep_examples() -> CheckResult {
    let checks = [
        (nstep_return(&[1.0, 1.0, 1.0], 0.9, false), (2.71, 0.729)),
        (nstep_return(&[1.0, 1.0], 0.9, true), (1.9, 0.0)),
        (nstep_return(&[0.25], 0.9, false), (0.25, 0.9)),
    ];
    for (got, (sum, disc)) in checks {
        match got {
            Ok((s, d)) if (s - sum).abs() < 1e-12 && (d - disc).abs() < 1e-12 => {}
            other => return CheckResult::new("nstep-return", false, format!("{other:?}")),
        }
    }
    if nstep_return(&[], 0.9, false).is_ok() {
        return CheckResult::new("nstep-return", false, "empty window accepted");
    }
    CheckResult::new("nstep-return", true, "window arithmetic and empty-window rejection")
}

fn width_policy_counts() -> CheckResult {
    let base = QNetworkConfig { activation: Activation::Relu, ..Default::default() };
    let counts = |cfg: &QNetworkConfig| -> Result<Vec<usize>> {
        let config = AgentConfig { network: cfg.clone(), ..Default::default() };
        let agent = DqnAgent::new(config, (4, 10, 10), 5, 1)?;
        Ok(agent.layer_infos().into_iter().map(|l| l.weight_count).collect())
    };
    let b = match counts(&base) {
        Ok(c) => c,
        Err(e) => return CheckResult::new("width-policy", false, e.to_string()),
    };
    let big = match counts(&QNetworkConfig { activation: Activation::Crelu, width_policy: WidthPolicy::InvariantInput, ..base.clone() }) {
        Ok(c) => c,
        Err(e) => return CheckResult::new("width-policy", false, e.to_string()),
    };
    for i in 1..b.len() {
        if big[i] != 2 * b[i] {
            return CheckResult::new("width-policy", false, format!("layer {i} not doubled"));
        }
    }
    if big[0] != b[0] {
        return CheckResult::new("width-policy", false, "first layer changed");
    }
    CheckResult::new("width-policy", true, "invariant-input doubles all but the first layer")
}

fn determinism_smoke() -> CheckResult {
    let dir = std::env::temp_dir().join(format!("verify-determinism-{}", std::process::id()));
    let config = ExperimentConfig {
        run_id: "verify-smoke".into(),
        kind: RunKind::Continual,
        scratch_task: None,
        seeds: vec![5],
        output_dir: dir.clone(),
        schedule: ScheduleConfig { frames_per_visit: 600, cycles: 1 },
        tasks: vec![
            TaskConfig::new("catch", crate::envs::GameKind::Catch),
            TaskConfig::new("avoid", crate::envs::GameKind::Avoid),
        ],
        agent: AgentConfig {
            network: QNetworkConfig { hidden: 16, conv: vec![ConvSpec { channels: 4, kernel: 4, stride: 2 }], ..Default::default() },
            ..Default::default()
        },
        replay: crate::replay::ReplayConfig { capacity: 4_096, min_history: 64, ..Default::default() },
        probes: crate::diagnostics::ProbeSettings { enabled: true, updates: 20, minibatches: 10 },
    };
    let run_once = |tag: &str| -> Result<Vec<u8>> {
        let mut cfg = config.clone();
        cfg.output_dir = dir.join(tag);
        let summary = run_experiment(&cfg, 5)?;
        Ok(std::fs::read(summary.metrics_jsonl)?)
    };
    let result = match (run_once("a"), run_once("b")) {
        (Ok(a), Ok(b)) if a == b => {
            CheckResult::new("determinism-smoke", true, format!("{} identical bytes", a.len()))
        }
        (Ok(_), Ok(_)) => CheckResult::new("determinism-smoke", false, "metric files differ"),
        (Err(e), _) | (_, Err(e)) => CheckResult::new("determinism-smoke", false, e.to_string()),
    };
    std::fs::remove_dir_all(&dir).ok();
    result
}
