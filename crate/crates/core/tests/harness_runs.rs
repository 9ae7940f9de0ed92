//! End-to-end smoke runs through the experiment harness.

use plastic_rl::agent::{AgentConfig, ConvSpec, QNetworkConfig};
use plastic_rl::diagnostics::ProbeSettings;
use plastic_rl::envs::GameKind;
use plastic_rl::harness::{
    parse_jsonl, render_plot, run_experiment, ExperimentConfig, PlotSpec, RunKind, ScheduleConfig,
    TaskConfig,
};
use plastic_rl::replay::ReplayConfig;
use std::path::PathBuf;

fn smoke_config(dir: &PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        run_id: "smoke".into(),
        kind: RunKind::Continual,
        scratch_task: None,
        seeds: vec![1, 2],
        output_dir: dir.clone(),
        schedule: ScheduleConfig { frames_per_visit: 1_200, cycles: 2 },
        tasks: vec![
            TaskConfig::new("catch", GameKind::Catch),
            TaskConfig {
                mode: plastic_rl::envs::ModeParams { invert_obs: true, ..Default::default() },
                ..TaskConfig::new("catch-invert", GameKind::Catch)
            },
        ],
        agent: AgentConfig {
            network: QNetworkConfig {
                conv: vec![ConvSpec { channels: 4, kernel: 4, stride: 2 }],
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        },
        replay: ReplayConfig { capacity: 8_192, min_history: 64, ..Default::default() },
        probes: ProbeSettings { enabled: true, updates: 50, minibatches: 20 },
    }
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plastic-rl-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

#[test]
fn continual_smoke_run_produces_probes_and_conformant_rows() {
    let dir = temp_dir("smoke");
    let config = smoke_config(&dir);
    let summary = run_experiment(&config, 1).unwrap();

    // 2 tasks x 2 cycles = 4 visits, each long enough for its probe.
    assert_eq!(summary.frames, 4_800);
    assert_eq!(summary.report.probes.len(), 4);
    for p in &summary.report.probes {
        assert!(p.mean_loss.is_finite());
        assert_eq!(p.weight_change.len(), 5); // conv1 + four head layers
        assert_eq!(p.grad_norms.len(), 5);
        assert_eq!(p.activations.len(), 3); // trunk + two stream hiddens
        for a in &p.activations {
            let f = a.nonzero_fraction();
            assert!((0.0..=1.0).contains(&f), "activation fraction {f}");
        }
    }

    // Schedule conformance: every row's task matches the schedule lookup.
    let schedule = config.resolve_schedule().unwrap();
    let rows = parse_jsonl(&summary.metrics_jsonl).unwrap();
    assert!(!rows.is_empty());
    let mut probe_rows = 0;
    for row in &rows {
        let (task_idx, visit) = schedule.lookup(row.frame).unwrap();
        assert_eq!(row.task, schedule.tasks[task_idx].spec.id, "frame {}", row.frame);
        if row.metric.starts_with("probe/") {
            probe_rows += 1;
        } else {
            assert_eq!(row.visit, visit, "frame {}", row.frame);
        }
    }
    assert!(probe_rows >= 4 * 20, "probe rows: {probe_rows}");

    // Visit-end returns recorded for every (task, visit).
    for (task, ends) in &summary.visit_end_returns {
        assert_eq!(ends.len(), 2, "task {task} visits");
    }
    assert!(summary.checkpoint.exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_seed_runs_are_byte_identical() {
    let dir_a = temp_dir("det-a");
    let dir_b = temp_dir("det-b");
    let mut config = smoke_config(&dir_a);
    config.schedule = ScheduleConfig { frames_per_visit: 800, cycles: 1 };
    let a = run_experiment(&config, 7).unwrap();
    config.output_dir = dir_b.clone();
    let b = run_experiment(&config, 7).unwrap();
    assert_eq!(
        std::fs::read(&a.metrics_jsonl).unwrap(),
        std::fs::read(&b.metrics_jsonl).unwrap()
    );
    assert_eq!(
        std::fs::read(&a.metrics_csv).unwrap(),
        std::fs::read(&b.metrics_csv).unwrap()
    );
    assert_eq!(
        std::fs::read(&a.checkpoint).unwrap(),
        std::fs::read(&b.checkpoint).unwrap()
    );
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn scratch_run_sticks_to_one_task() {
    let dir = temp_dir("scratch");
    let mut config = smoke_config(&dir);
    config.run_id = "smoke-scratch".into();
    config.kind = RunKind::Scratch;
    config.scratch_task = Some("catch".into());
    config.schedule = ScheduleConfig { frames_per_visit: 800, cycles: 2 };
    let summary = run_experiment(&config, 3).unwrap();
    assert_eq!(summary.frames, 1_600);
    let rows = parse_jsonl(&summary.metrics_jsonl).unwrap();
    assert!(rows.iter().all(|r| r.task == "catch"));
    // Visits still tick over for the probe bookkeeping.
    assert_eq!(summary.report.probes.len(), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn plot_renders_and_refuses_mismatched_schedules() {
    let dir = temp_dir("plot");
    let mut config = smoke_config(&dir);
    config.schedule = ScheduleConfig { frames_per_visit: 600, cycles: 2 };
    config.probes = ProbeSettings { enabled: false, ..Default::default() };
    let s1 = run_experiment(&config, 1).unwrap();
    let s2 = run_experiment(&config, 2).unwrap();

    let out = dir.join("curves.svg");
    let spec = PlotSpec { reset_overlay: true, ..Default::default() };
    render_plot(&[s1.out_dir.clone(), s2.out_dir.clone()], &spec, &out).unwrap();
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("polyline"), "mean lines drawn");
    assert!(svg.contains("stroke-dasharray"), "dotted first-visit reference drawn");
    assert!(svg.contains("catch-invert"), "subplot per task");

    // A run with a different visit length cannot be overlaid.
    let mut other = smoke_config(&dir);
    other.run_id = "smoke-short".into();
    other.schedule = ScheduleConfig { frames_per_visit: 300, cycles: 2 };
    other.probes = ProbeSettings { enabled: false, ..Default::default() };
    let s3 = run_experiment(&other, 1).unwrap();
    let err = render_plot(&[s1.out_dir.clone(), s3.out_dir.clone()], &spec, &out).unwrap_err();
    assert!(err.to_string().contains("misalign"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}
