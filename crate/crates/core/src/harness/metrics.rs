//! Metric stream persistence: line-delimited JSON records plus a flat CSV
//! table with a fixed field order. Identical inputs produce byte-identical
//! files.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "run_id,seed,frame,task,visit,metric,value";

/// One measurement: what, when, and its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub frame: u64,
    pub task: String,
    pub visit: u64,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id, self.seed, self.frame, self.task, self.visit, self.metric, self.value
        )
    }
}

/// Append-only writer for a run's metric files; flushed at probe
/// boundaries and on finish.
pub struct MetricWriter {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    jsonl_path: PathBuf,
    csv_path: PathBuf,
    last_frame: u64,
}

impl MetricWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let jsonl_path = dir.join("metrics.jsonl");
        let csv_path = dir.join("metrics.csv");
        let jsonl = BufWriter::new(File::create(&jsonl_path)?);
        let mut csv = BufWriter::new(File::create(&csv_path)?);
        writeln!(csv, "{CSV_HEADER}")?;
        Ok(MetricWriter { jsonl, csv, jsonl_path, csv_path, last_frame: 0 })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        debug_assert!(
            row.frame >= self.last_frame,
            "metric frames must be non-decreasing ({} after {})",
            row.frame,
            self.last_frame
        );
        self.last_frame = row.frame;
        serde_json::to_writer(&mut self.jsonl, row)
            .map_err(|e| Error::Usage(format!("metric serialization: {e}")))?;
        self.jsonl.write_all(b"\n")?;
        writeln!(self.csv, "{}", row.csv_line())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.jsonl.flush()?;
        self.csv.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(PathBuf, PathBuf)> {
        self.flush()?;
        Ok((self.jsonl_path, self.csv_path))
    }

    pub fn jsonl_path(&self) -> &Path {
        &self.jsonl_path
    }
}

/// Write a complete, frame-ordered row list in one call.
pub fn write_metrics(dir: &Path, rows: &[MetricRow]) -> Result<(PathBuf, PathBuf)> {
    let mut w = MetricWriter::create(dir)?;
    for r in rows {
        w.write(r)?;
    }
    w.finish()
}

pub fn parse_jsonl(path: &Path) -> Result<Vec<MetricRow>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row: MetricRow = serde_json::from_str(&line)
            .map_err(|e| Error::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

pub fn parse_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Usage(format!(
                "{}: bad csv header {other:?}",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(7, ',').collect();
        if parts.len() != 7 {
            return Err(Error::Usage(format!(
                "{}:{}: expected 7 fields",
                path.display(),
                i + 2
            )));
        }
        let parse_err = |what: &str| Error::Usage(format!("{}:{}: bad {what}", path.display(), i + 2));
        out.push(MetricRow {
            run_id: parts[0].to_string(),
            seed: parts[1].parse().map_err(|_| parse_err("seed"))?,
            frame: parts[2].parse().map_err(|_| parse_err("frame"))?,
            task: parts[3].to_string(),
            visit: parts[4].parse().map_err(|_| parse_err("visit"))?,
            metric: parts[5].to_string(),
            value: parts[6].parse().map_err(|_| parse_err("value"))?,
        });
    }
    Ok(out)
}
