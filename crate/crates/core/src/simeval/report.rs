use std::io::Write;

use serde::{Deserialize, Serialize};

use super::episode::UserOutcome;
use super::metrics::Metric;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub k: usize,
    pub value: f64,
}

/// Aggregate result of one simulated episode (one arm, one seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub arm: String,
    pub seed: u64,
    pub n_users: usize,
    /// Means over users, metric-major then ascending cutoff.
    pub metrics: Vec<MetricValue>,
    pub request_count: usize,
    pub request_rate: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Users whose target never appeared in the final order.
    pub missing_targets: usize,
    pub mean_inconsistency: f64,
    #[serde(skip)]
    pub outcomes: Vec<UserOutcome>,
}

pub const CSV_HEADER: &str = "arm,metric,K,value,request_rate,seed";

impl SimReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric && m.k == k)
            .map(|m| m.value)
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        self.get(Metric::Ndcg, k).unwrap_or(f64::NAN)
    }

    pub fn hr(&self, k: usize) -> f64 {
        self.get(Metric::Hr, k).unwrap_or(f64::NAN)
    }

    fn csv_rows(&self, out: &mut String) {
        for m in &self.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.arm,
                m.metric.name(),
                m.k,
                m.value,
                self.request_rate,
                self.seed
            ));
        }
    }
}

/// Reports as CSV, one row per (report, metric, cutoff).
pub fn reports_csv(reports: &[SimReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        r.csv_rows(&mut out);
    }
    out
}

/// Reports as line-JSON, one object per report.
pub fn write_reports_jsonl<W: Write>(mut w: W, reports: &[SimReport]) -> Result<()> {
    for r in reports {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// Mean of one metric over the reports carrying `arm`, with the number of
/// reports averaged.
pub fn mean_over_seeds(reports: &[SimReport], arm: &str, metric: Metric, k: usize) -> Option<(f64, usize)> {
    let vals: Vec<f64> = reports
        .iter()
        .filter(|r| r.arm == arm)
        .filter_map(|r| r.get(metric, k))
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some((vals.iter().sum::<f64>() / vals.len() as f64, vals.len()))
    }
}
