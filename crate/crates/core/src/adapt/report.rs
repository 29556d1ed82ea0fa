//! Evaluation report rows, written as CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::zero_shot::SeedSummary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub task: String,
    pub shots: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

pub const REPORT_HEADER: &str = "dataset,task,shots,seed,metric,value";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    /// One row per seed plus `<metric>_mean` / `<metric>_std` rows (seed column 0).
    pub fn push_summary(&mut self, dataset: &str, task: &str, shots: usize, metric: &str, summary: &SeedSummary) {
        for (&seed, &value) in summary.seeds.iter().zip(&summary.values) {
            self.records.push(EvalRecord {
                dataset: dataset.into(),
                task: task.into(),
                shots,
                seed,
                metric: metric.into(),
                value,
            });
        }
        for (suffix, value) in [("mean", summary.mean), ("std", summary.std)] {
            self.records.push(EvalRecord {
                dataset: dataset.into(),
                task: task.into(),
                shots,
                seed: 0,
                metric: format!("{metric}_{suffix}"),
                value,
            });
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.dataset),
                csv_field(&r.task),
                r.shots,
                r.seed,
                csv_field(&r.metric),
                r.value
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_and_quoting() {
        let mut r = EvalReport::default();
        r.push_summary("a,b", "nc", 0, "accuracy", &SeedSummary::new(vec![3, 4], vec![0.5, 1.0]));
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "\"a,b\",nc,0,3,accuracy,0.5");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].contains("accuracy_mean,0.75"));
    }
}
