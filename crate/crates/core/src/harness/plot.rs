//! Per-task learning-curve plots as standalone SVG files.
//!
//! Each subplot shows one task with its visits stacked on the x axis
//! (task-local frames), visit boundaries marked, a multi-seed mean line
//! per run with a +/- one standard deviation band, an optional dotted
//! line at the first run's first-visit-end level, and an optional tiled
//! reset overlay synthesized from the first run's first visit.

use super::metrics::{parse_jsonl, MetricRow};
use super::runner::RunMeta;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub metric: String,
    pub title: String,
    /// Overlay the idealized reset curve tiled from the first run group.
    pub reset_overlay: bool,
    /// Dotted reference at the first group's first-visit-end mean.
    pub first_visit_reference: bool,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            metric: "return_rolling_100".into(),
            title: String::new(),
            reset_overlay: false,
            first_visit_reference: true,
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#17becf"];
const RESET_COLOR: &str = "#888888";
const GRID_POINTS: usize = 240;

struct RunGroup {
    run_id: String,
    task_ids: Vec<String>,
    /// Per seed: rows of the chosen metric.
    seeds: Vec<Vec<MetricRow>>,
}

/// Render overlaid run groups into one SVG; returns the output path.
pub fn render_plot(run_dirs: &[PathBuf], spec: &PlotSpec, out: &Path) -> Result<PathBuf> {
    if run_dirs.is_empty() {
        return Err(Error::usage("render_plot needs at least one run directory"));
    }
    let mut metas = Vec::new();
    for dir in run_dirs {
        let meta = RunMeta::load(dir)?;
        let rows = parse_jsonl(&dir.join("metrics.jsonl"))?;
        metas.push((meta, rows));
    }
    let k = metas[0].0.frames_per_visit;
    let cycles = metas[0].0.cycles;
    for (m, _) in &metas {
        if m.frames_per_visit != k || m.cycles != cycles {
            return Err(Error::usage(format!(
                "run {} (seed {}) uses {} frames/visit x {} cycles; overlaying onto {k} x {cycles} would misalign visit boundaries",
                m.run_id, m.seed, m.frames_per_visit, m.cycles
            )));
        }
    }

    // Group seeds by run id, preserving first-seen order.
    let mut groups: Vec<RunGroup> = Vec::new();
    for (meta, rows) in metas {
        let filtered: Vec<MetricRow> = rows.into_iter().filter(|r| r.metric == spec.metric).collect();
        match groups.iter_mut().find(|g| g.run_id == meta.run_id) {
            Some(g) => {
                if g.task_ids != meta.task_ids {
                    return Err(Error::usage(format!(
                        "run {} has seeds with different task lists",
                        meta.run_id
                    )));
                }
                g.seeds.push(filtered);
            }
            None => groups.push(RunGroup {
                run_id: meta.run_id,
                task_ids: meta.task_ids,
                seeds: vec![filtered],
            }),
        }
    }

    // Tasks shown: union over groups, first-seen order.
    let mut tasks: Vec<String> = Vec::new();
    for g in &groups {
        for t in &g.task_ids {
            if !tasks.iter().any(|x| x == t) {
                tasks.push(t.clone());
            }
        }
    }
    if tasks.is_empty() {
        return Err(Error::usage("no tasks found in the run metadata"));
    }

    let span = k * cycles;
    let mut svg = SvgGrid::new(tasks.len(), spec, span, k);
    for (ti, task) in tasks.iter().enumerate() {
        let mut curves: Vec<(String, &str, Vec<Option<f64>>, Vec<Option<f64>>)> = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            let per_seed: Vec<Vec<(u64, f64)>> = g
                .seeds
                .iter()
                .map(|rows| task_series(rows, task, k))
                .filter(|s| !s.is_empty())
                .collect();
            if per_seed.is_empty() {
                continue;
            }
            let (mean, std) = grid_stats(&per_seed, span);
            curves.push((g.run_id.clone(), COLORS[gi % COLORS.len()], mean, std));

            if gi == 0 && spec.reset_overlay {
                let tiled: Vec<Vec<(u64, f64)>> = per_seed
                    .iter()
                    .map(|s| {
                        let first: Vec<(u64, f64)> =
                            s.iter().cloned().filter(|(x, _)| *x < k).collect();
                        (0..cycles)
                            .flat_map(|c| first.iter().map(move |(x, v)| (x + c * k, *v)))
                            .collect()
                    })
                    .filter(|s: &Vec<(u64, f64)>| !s.is_empty())
                    .collect();
                if !tiled.is_empty() {
                    let (mean, std) = grid_stats(&tiled, span);
                    curves.push((format!("{}-reset", g.run_id), RESET_COLOR, mean, std));
                }
            }
        }
        let reference = if spec.first_visit_reference {
            first_visit_end_mean(&groups[0], task, k)
        } else {
            None
        };
        svg.subplot(ti, task, &curves, reference);
    }
    let body = svg.finish(&groups);
    std::fs::write(out, body)?;
    Ok(out.to_path_buf())
}

/// Task-local series: x = visit * K + (frame mod K), in row order.
fn task_series(rows: &[MetricRow], task: &str, k: u64) -> Vec<(u64, f64)> {
    rows.iter()
        .filter(|r| r.task == task)
        .map(|r| (r.visit * k + r.frame % k, r.value))
        .collect()
}

/// Carry-forward resample of each seed onto a shared grid, then per-point
/// mean and population standard deviation over the seeds with data.
fn grid_stats(series: &[Vec<(u64, f64)>], span: u64) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut mean = vec![None; GRID_POINTS];
    let mut std = vec![None; GRID_POINTS];
    let resampled: Vec<Vec<Option<f64>>> = series
        .iter()
        .map(|s| {
            let mut out = vec![None; GRID_POINTS];
            let mut idx = 0usize;
            let mut last = None;
            for (g, slot) in out.iter_mut().enumerate() {
                let x = (g as u64 + 1) * span / GRID_POINTS as u64;
                while idx < s.len() && s[idx].0 <= x {
                    last = Some(s[idx].1);
                    idx += 1;
                }
                *slot = last;
            }
            out
        })
        .collect();
    for g in 0..GRID_POINTS {
        let vals: Vec<f64> = resampled.iter().filter_map(|r| r[g]).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        mean[g] = Some(m);
        std[g] = Some(var.sqrt());
    }
    (mean, std)
}

/// Mean across the group's seeds of the last value inside visit 0.
fn first_visit_end_mean(group: &RunGroup, task: &str, k: u64) -> Option<f64> {
    let vals: Vec<f64> = group
        .seeds
        .iter()
        .filter_map(|rows| {
            task_series(rows, task, k)
                .into_iter()
                .filter(|(x, _)| *x < k)
                .last()
                .map(|(_, v)| v)
        })
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

// ── SVG assembly ────────────────────────────────────────────────────────

const SUB_W: f64 = 360.0;
const SUB_H: f64 = 240.0;
const MARGIN: f64 = 46.0;
const TOP: f64 = 40.0;

struct SvgGrid {
    cols: usize,
    rows: usize,
    span: u64,
    k: u64,
    title: String,
    body: String,
}

impl SvgGrid {
    fn new(n: usize, spec: &PlotSpec, span: u64, k: u64) -> Self {
        let cols = n.min(3).max(1);
        let rows = n.div_ceil(cols);
        SvgGrid {
            cols,
            rows,
            span,
            k,
            title: if spec.title.is_empty() { spec.metric.clone() } else { spec.title.clone() },
            body: String::new(),
        }
    }

    fn origin(&self, index: usize) -> (f64, f64) {
        let col = index % self.cols;
        let row = index / self.cols;
        (
            MARGIN + col as f64 * (SUB_W + MARGIN),
            TOP + MARGIN / 2.0 + row as f64 * (SUB_H + MARGIN),
        )
    }

    fn subplot(
        &mut self,
        index: usize,
        task: &str,
        curves: &[(String, &str, Vec<Option<f64>>, Vec<Option<f64>>)],
        reference: Option<f64>,
    ) {
        let (ox, oy) = self.origin(index);
        // y range over every defined mean +/- std.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, _, mean, std) in curves {
            for g in 0..GRID_POINTS {
                if let (Some(m), Some(s)) = (mean[g], std[g]) {
                    lo = lo.min(m - s);
                    hi = hi.max(m + s);
                }
            }
        }
        if let Some(r) = reference {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let x_of = |g: usize| ox + (g as f64 + 1.0) / GRID_POINTS as f64 * SUB_W;
        let y_of = |v: f64| oy + SUB_H - (v - lo) / (hi - lo) * SUB_H;

        let b = &mut self.body;
        let _ = write!(
            b,
            r##"<rect x="{ox}" y="{oy}" width="{SUB_W}" height="{SUB_H}" fill="none" stroke="#333" stroke-width="1"/>"##
        );
        let _ = write!(
            b,
            r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            ox + SUB_W / 2.0,
            oy - 6.0,
            xml_escape(task)
        );
        // Visit boundaries.
        let mut v = self.k;
        while v < self.span {
            let x = ox + v as f64 / self.span as f64 * SUB_W;
            let _ = write!(
                b,
                r##"<line x1="{x:.1}" y1="{oy}" x2="{x:.1}" y2="{}" stroke="#dddddd" stroke-width="1"/>"##,
                oy + SUB_H
            );
            v += self.k;
        }
        // y tick labels.
        for t in 0..=3 {
            let val = lo + (hi - lo) * t as f64 / 3.0;
            let y = y_of(val);
            let _ = write!(
                b,
                r#"<text x="{}" y="{:.1}" font-size="9" text-anchor="end" font-family="sans-serif">{:.2}</text>"#,
                ox - 4.0,
                y + 3.0,
                val
            );
        }
        if let Some(r) = reference {
            let y = y_of(r);
            let _ = write!(
                b,
                r##"<line x1="{ox}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#555555" stroke-width="1" stroke-dasharray="4 3"/>"##,
                ox + SUB_W
            );
        }
        for (_, color, mean, std) in curves {
            // Band: contiguous defined segments as closed polygons.
            let mut seg: Vec<(f64, f64, f64)> = Vec::new();
            let flush = |seg: &mut Vec<(f64, f64, f64)>, b: &mut String| {
                if seg.len() >= 2 {
                    let mut d = String::from("M");
                    for (x, up, _) in seg.iter() {
                        let _ = write!(d, "{x:.1},{up:.1} L");
                    }
                    for (x, _, dn) in seg.iter().rev() {
                        let _ = write!(d, "{x:.1},{dn:.1} L");
                    }
                    d.truncate(d.len() - 2);
                    d.push('Z');
                    let _ = write!(
                        b,
                        r#"<path d="{d}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#
                    );
                }
                seg.clear();
            };
            for g in 0..GRID_POINTS {
                match (mean[g], std[g]) {
                    (Some(m), Some(s)) => seg.push((x_of(g), y_of(m + s), y_of(m - s))),
                    _ => flush(&mut seg, b),
                }
            }
            flush(&mut seg, b);
            // Mean polyline.
            let mut pts = String::new();
            let mut drew = false;
            for g in 0..GRID_POINTS {
                if let Some(m) = mean[g] {
                    let _ = write!(pts, "{:.1},{:.1} ", x_of(g), y_of(m));
                    drew = true;
                } else if drew {
                    let _ = write!(
                        b,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        pts.trim_end()
                    );
                    pts.clear();
                    drew = false;
                }
            }
            if drew {
                let _ = write!(
                    b,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.trim_end()
                );
            }
        }
    }

    fn finish(self, groups: &[RunGroup]) -> String {
        let width = MARGIN + self.cols as f64 * (SUB_W + MARGIN);
        let height = TOP + MARGIN / 2.0 + self.rows as f64 * (SUB_H + MARGIN);
        let mut legend = String::new();
        let mut x = MARGIN;
        for (gi, g) in groups.iter().enumerate() {
            let color = COLORS[gi % COLORS.len()];
            let _ = write!(
                legend,
                r#"<rect x="{x}" y="12" width="14" height="4" fill="{color}"/><text x="{}" y="18" font-size="11" font-family="sans-serif">{}</text>"#,
                x + 18.0,
                xml_escape(&g.run_id)
            );
            x += 24.0 + 7.0 * g.run_id.len() as f64;
        }
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
                r#"<rect width="100%" height="100%" fill="white"/>"#,
                r#"<text x="{tw:.0}" y="30" font-size="15" text-anchor="middle" font-family="sans-serif">{title}</text>"#,
                "{legend}{body}</svg>\n"
            ),
            w = width,
            h = height,
            tw = width / 2.0,
            title = xml_escape(&self.title),
            legend = legend,
            body = self.body,
        )
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
