use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simnet::{Filter, Transcript};

use crate::{CliError, Result};

pub const REPORT_VERSION: u32 = 1;

/// JSON schema every `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub messages: u64,
    pub rounds: u64,
    pub bytes: u64,
    /// Bytes per tag name.
    pub per_tag: BTreeMap<String, u64>,
}

impl TrafficSummary {
    pub fn of(t: &Transcript) -> Self {
        let a = t.account(&Filter::all());
        Self {
            messages: a.messages,
            rounds: a.rounds,
            bytes: a.bytes,
            per_tag: a.per_tag.into_iter().map(|(k, v)| (k, v.bytes)).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Computation time; the simulator adds no latency.
    pub seconds: f64,
    pub traffic: TrafficSummary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub test_rows: usize,
    pub train_rows: usize,
    pub train_time_s: f64,
    /// Keyed by `psi`, `preprocess`, `train`, `evaluate`.
    pub phases: BTreeMap<String, PhaseReport>,
    /// Rows both parties kept after alignment (vertical).
    pub aligned_rows: Option<usize>,
    /// Synthetic rows SMOTE added.
    pub synthetic_rows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub dataset: String,
    pub model: String,
    pub mode: String,
    pub profile: String,
    pub config_digest: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub train_time_mean_s: f64,
    pub traffic: TrafficSummary,
    pub repeats: Vec<RepeatReport>,
}

/// Population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl MetricsReport {
    pub fn summarize(&mut self) {
        let (m, s) = mean_std(&self.repeats.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        self.accuracy_mean = m;
        self.accuracy_std = s;
        self.train_time_mean_s = mean_std(&self.repeats.iter().map(|r| r.train_time_s).collect::<Vec<_>>()).0;
        let mut total = TrafficSummary::default();
        for p in self.repeats.iter().flat_map(|r| r.phases.values()) {
            total.messages += p.traffic.messages;
            total.rounds += p.traffic.rounds;
            total.bytes += p.traffic.bytes;
            for (k, b) in &p.traffic.per_tag {
                *total.per_tag.entry(k.clone()).or_default() += b;
            }
        }
        self.traffic = total;
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.train_time_mean_s = 0.0;
        for rep in &mut r.repeats {
            rep.train_time_s = 0.0;
            for p in rep.phases.values_mut() {
                p.seconds = 0.0;
            }
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| CliError::Report(e.to_string()))?;
        if r.version != REPORT_VERSION {
            return Err(CliError::Report(format!("report version {} (expected {REPORT_VERSION})", r.version)));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One row per repeat.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Report(e.to_string()))?;
        let phases = ["psi", "preprocess", "train", "evaluate"];
        let mut header = vec!["seed", "accuracy", "correct", "test_rows", "train_rows", "train_time_s"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        header.extend(phases.iter().flat_map(|p| [format!("{p}_s"), format!("{p}_bytes")]));
        w.write_record(&header).map_err(|e| CliError::Report(e.to_string()))?;
        for r in &self.repeats {
            let mut row = vec![
                r.seed.to_string(),
                r.accuracy.to_string(),
                r.correct.to_string(),
                r.test_rows.to_string(),
                r.train_rows.to_string(),
                r.train_time_s.to_string(),
            ];
            for p in phases {
                let ph = r.phases.get(p).cloned().unwrap_or_default();
                row.push(ph.seconds.to_string());
                row.push(ph.traffic.bytes.to_string());
            }
            w.write_record(&row).map_err(|e| CliError::Report(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Short human-readable summary.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} / {} ({}, {}): accuracy {:.4} +- {:.4} over {} run(s), train {:.2} s mean, {} bytes exchanged\n",
            self.dataset,
            self.model,
            self.mode,
            self.profile,
            self.accuracy_mean,
            self.accuracy_std,
            self.repeats.len(),
            self.train_time_mean_s,
            self.traffic.bytes
        );
        for r in &self.repeats {
            s += &format!(
                "  seed {:>4}: {:.4} ({}/{}), train {:.2} s\n",
                r.seed, r.accuracy, r.correct, r.test_rows, r.train_time_s
            );
        }
        s
    }
}
