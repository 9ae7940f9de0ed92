//! Experiment CLI: run and sweep configured experiments, synthesize reset
//! curves, render plots, describe the task suite, and verify invariants.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plastic_rl::envs::Env;
use plastic_rl::harness::{
    self, parse_jsonl, render_plot, reset_curve_rows, run_experiment, run_sweep, write_metrics,
    ExperimentConfig, PlotSpec,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "plastic-rl", about = "Continual RL plasticity laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one (config, seed) run.
    Run(RunArgs),
    /// Execute every seed of a config, in parallel.
    Sweep(ConfigArg),
    /// Tile a run's first-visit performance into an idealized reset curve.
    ResetCurve(ResetArgs),
    /// Render per-task learning curves from one or more run directories.
    Plot(PlotArgs),
    /// Print the resolved action sets and observation shapes of a config.
    DescribeTasks(ConfigArg),
    /// Run the invariant suites and print one line per check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Path to an experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seed to run (must not be combined with an empty seed list).
    #[arg(long)]
    seed: u64,
    /// Override the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ResetArgs {
    /// A finished run directory (contains metrics.jsonl and run_meta.json).
    #[arg(long)]
    run: PathBuf,
    /// Where to write the synthesized run directory.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Metric to plot.
    #[arg(long, default_value = "return_rolling_100")]
    metric: String,
    /// Figure title (defaults to the metric name).
    #[arg(long, default_value = "")]
    title: String,
    /// Overlay the tiled reset curve synthesized from the first run.
    #[arg(long)]
    reset: bool,
    /// Skip the dotted first-visit-end reference line.
    #[arg(long)]
    no_reference: bool,
    /// Run directories to overlay (seeds of the same run id are banded).
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Smaller suite sizes.
    #[arg(long)]
    quick: bool,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let mut config = ExperimentConfig::from_file(&args.config)?;
            if let Some(dir) = args.output_dir {
                config.output_dir = dir;
            }
            let summary = run_experiment(&config, args.seed)?;
            println!(
                "run {} seed {}: {} frames, {} episodes -> {}",
                summary.run_id,
                summary.seed,
                summary.frames,
                summary.episodes,
                summary.out_dir.display()
            );
            for (task, ends) in &summary.visit_end_returns {
                let series: Vec<String> =
                    ends.iter().map(|(v, r)| format!("v{v}={r:.3}")).collect();
                println!("  {task}: {}", series.join(" "));
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let config = ExperimentConfig::from_file(&args.config)?;
            let summaries = run_sweep(&config)?;
            for s in &summaries {
                println!(
                    "run {} seed {}: {} frames, {} episodes -> {}",
                    s.run_id,
                    s.seed,
                    s.frames,
                    s.episodes,
                    s.out_dir.display()
                );
            }
            Ok(())
        }
        Command::ResetCurve(args) => reset_curve(&args),
        Command::Plot(args) => {
            let spec = PlotSpec {
                metric: args.metric,
                title: args.title,
                reset_overlay: args.reset,
                first_visit_reference: !args.no_reference,
            };
            let path = render_plot(&args.runs, &spec, &args.out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::DescribeTasks(args) => describe_tasks(&args.config),
        Command::Verify(args) => {
            let results = harness::verify::run_all(args.quick);
            let mut failed = 0;
            for r in &results {
                println!("{}: {} — {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
                if !r.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} invariant suite(s) failed");
            }
            Ok(())
        }
    }
}

fn describe_tasks(config_path: &PathBuf) -> Result<()> {
    let config = ExperimentConfig::from_file(config_path)?;
    let schedule = config.resolve_schedule()?;
    println!(
        "schedule: {} task(s), {} frames/visit, {} cycle(s), {} total frames",
        schedule.tasks.len(),
        schedule.frames_per_visit,
        schedule.cycles(),
        schedule.total_frames
    );
    let (c, h, w) = schedule.obs_shape()?;
    println!("observation: [{c}, {h}, {w}] (stacked channels, height, width)");
    for task in &schedule.tasks {
        let env = Env::new(task.clone())?;
        let actions: Vec<String> = (0..env.action_count()).map(|a| a.to_string()).collect();
        let m = &task.mode;
        let mut mods = Vec::new();
        if m.flip_controls {
            mods.push("flipped-controls".to_string());
        }
        if m.invert_obs {
            mods.push("inverted-observations".to_string());
        }
        if m.extra_actions > 0 {
            mods.push(format!("{} extra action(s)", m.extra_actions));
        }
        if m.drift != 0 {
            mods.push(format!("drift {:+}", m.drift));
        }
        if m.reward_scale != 1.0 {
            mods.push(format!("reward x{}", m.reward_scale));
        }
        let mode = if mods.is_empty() { "identity mode".to_string() } else { mods.join(", ") };
        println!(
            "  {:<18} {:?} {}x{} actions {{{}}} — {}",
            task.spec.id, task.spec.game, task.spec.height, task.spec.width,
            actions.join(","),
            mode
        );
    }
    Ok(())
}

fn reset_curve(args: &ResetArgs) -> Result<()> {
    let meta = plastic_rl::harness::RunMeta::load(&args.run)
        .with_context(|| format!("loading {}", args.run.display()))?;
    let rows = parse_jsonl(&args.run.join("metrics.jsonl"))?;
    let cycle_frames = meta.frames_per_visit * meta.task_ids.len() as u64;
    let first_visit: Vec<_> = rows
        .into_iter()
        .filter(|r| r.visit == 0 && !r.metric.starts_with("probe/"))
        .collect();
    let tiled = reset_curve_rows(&first_visit, cycle_frames, meta.cycles, "-reset")?;

    let out_dir = args
        .output_dir
        .join(format!("{}-reset", meta.run_id))
        .join(format!("seed{}", meta.seed));
    let (jsonl, _) = write_metrics(&out_dir, &tiled)?;
    let new_meta = plastic_rl::harness::RunMeta {
        run_id: format!("{}-reset", meta.run_id),
        ..meta
    };
    std::fs::write(
        out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&new_meta)?,
    )?;
    println!("wrote {} ({} rows)", jsonl.display(), tiled.len());
    Ok(())
}
