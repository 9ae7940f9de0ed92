//! Idealized reset-agent synthesis.
//!
//! No agent is run: the first-visit performance series is tiled across all
//! visits, which is what a learner with untouched learning ability and
//! total forgetting would show in expectation.

use super::metrics::MetricRow;
use crate::error::{Error, Result};

/// The first-visit series repeated `num_visits` times, concatenated.
pub fn synthesize_reset_curve<T: Clone>(first_visit: &[T], num_visits: usize) -> Result<Vec<T>> {
    if first_visit.is_empty() {
        return Err(Error::usage("reset curve needs a non-empty first-visit series"));
    }
    let mut out = Vec::with_capacity(first_visit.len() * num_visits);
    for _ in 0..num_visits {
        out.extend_from_slice(first_visit);
    }
    Ok(out)
}

/// Tile a run's first-visit metric rows across all visits, producing rows
/// whose (frame, visit) land exactly where the schedule places each later
/// visit of the same task. `cycle_frames` is frames_per_visit * task count.
pub fn reset_curve_rows(
    first_visit_rows: &[MetricRow],
    cycle_frames: u64,
    num_visits: u64,
    run_id_suffix: &str,
) -> Result<Vec<MetricRow>> {
    if first_visit_rows.is_empty() {
        return Err(Error::usage("reset curve needs a non-empty first-visit series"));
    }
    let mut out = Vec::with_capacity(first_visit_rows.len() * num_visits as usize);
    for visit in 0..num_visits {
        for row in first_visit_rows {
            let mut r = row.clone();
            r.run_id = format!("{}{}", row.run_id, run_id_suffix);
            r.frame = row.frame + visit * cycle_frames;
            r.visit = visit;
            out.push(r);
        }
    }
    out.sort_by_key(|r| r.frame);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_examples() {
        assert_eq!(
            synthesize_reset_curve(&['a', 'b'], 3).unwrap(),
            vec!['a', 'b', 'a', 'b', 'a', 'b']
        );
        assert_eq!(synthesize_reset_curve(&[1.5, 2.5], 1).unwrap(), vec![1.5, 2.5]);
        let out = synthesize_reset_curve(&[0.0; 7], 5).unwrap();
        assert_eq!(out.len(), 35);
        assert!(synthesize_reset_curve::<f64>(&[], 3).is_err());
    }

    #[test]
    fn rows_land_in_later_visit_windows() {
        let row = MetricRow {
            run_id: "base".into(),
            seed: 3,
            frame: 42,
            task: "catch".into(),
            visit: 0,
            metric: "return_rolling_100".into(),
            value: 0.5,
        };
        let out = reset_curve_rows(&[row], 200, 3, "-reset").unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].frame, 42);
        assert_eq!(out[1].frame, 242);
        assert_eq!(out[2].frame, 442);
        assert_eq!(out[2].visit, 2);
        assert_eq!(out[2].run_id, "base-reset");
        assert_eq!(out[2].value, 0.5);
    }
}
