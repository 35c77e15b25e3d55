use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One line of a run's metrics file, written after every training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub env_steps: u64,
    /// Fraction of this epoch's training episodes that reached the goal.
    pub train_success: f64,
    /// Greedy success rate, present on evaluation epochs only.
    pub eval_success: Option<f64>,
    pub loss_awr: Option<f64>,
    pub loss_value: f64,
    pub loss_imitation: Option<f64>,
    pub mean_awr_weight: Option<f64>,
    pub wall_ms: u64,
}

pub fn write_metrics_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Environment steps at the first evaluation scoring at least `threshold`.
pub fn steps_to_success(records: &[MetricsRecord], threshold: f64) -> Option<u64> {
    records
        .iter()
        .find(|r| r.eval_success.is_some_and(|s| s >= threshold))
        .map(|r| r.env_steps)
}

/// The last evaluation result in the run.
pub fn final_eval(records: &[MetricsRecord]) -> Option<f64> {
    records.iter().rev().find_map(|r| r.eval_success)
}
