use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundResult;
use crate::error::Result;
use crate::estimators::AteEstimate;
use crate::metrics::{Interval, MetricValue};
use crate::taskgen::TaskKind;

use super::config::RunConfig;
use super::svg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    pub treatment_accuracy: MetricValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_iptw: Option<MetricValue>,
    /// Absent when the scores are constant and the correlation is undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<MetricValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub task: TaskKind,
    pub level: u32,
    pub model: String,
    pub estimator: String,
    pub true_ate: f64,
    pub estimate: AteEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_ci: Option<Interval>,
    pub bias: MetricValue,
    pub model_summary: ModelSummary,
    /// Bound interval compared against this cell's empirical interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundResult>,
    pub clip_epsilon: f64,
}

impl CellRecord {
    pub fn coordinates(&self) -> String {
        format!("{}/{}/{}/{}", self.task, self.level, self.model, self.estimator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    /// Cells with a learned or external model and the per-arm IPTW estimator.
    pub cells_compared: usize,
    pub empirical_tighter: usize,
    pub fraction_empirical_tighter: Option<f64>,
    pub unadjusted_within_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub clip_epsilon: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_level: f64,
    pub wall_time_seconds: f64,
    /// Set on reports flushed after a failed run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub config: RunConfig,
    pub cells: Vec<CellRecord>,
    pub bound_summary: BoundSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(format!("unknown format {other}; expected json, csv or svg")),
        }
    }
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<EvalReport> {
        EvalReport::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for c in &self.cells {
            out.write_record(csv_row(c))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn cell(&self, task: TaskKind, level: u32, model: &str, estimator: &str) -> Option<&CellRecord> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.level == level && c.model == model && c.estimator == estimator)
    }
}

const CSV_COLUMNS: [&str; 26] = [
    "task",
    "level",
    "model",
    "estimator",
    "true_ate",
    "estimate",
    "estimate_lower",
    "estimate_upper",
    "bias",
    "bias_lower",
    "bias_upper",
    "treatment_accuracy",
    "accuracy_lower",
    "accuracy_upper",
    "validation_accuracy",
    "mse_iptw",
    "spearman",
    "n_effective",
    "dropped_strata",
    "unmatched_treated",
    "unmatched_control",
    "arm_bound_t0",
    "arm_bound_t1",
    "bound_lower",
    "bound_upper",
    "empirical_tighter",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(c: &CellRecord) -> Vec<String> {
    let ms = &c.model_summary;
    let d = &c.estimate.diagnostics;
    let bound = c.bound.as_ref();
    vec![
        c.task.to_string(),
        c.level.to_string(),
        c.model.clone(),
        c.estimator.clone(),
        c.true_ate.to_string(),
        c.estimate.value.to_string(),
        opt(c.estimate_ci.map(|i| i.lower)),
        opt(c.estimate_ci.map(|i| i.upper)),
        c.bias.value.to_string(),
        opt(c.bias.ci.map(|i| i.lower)),
        opt(c.bias.ci.map(|i| i.upper)),
        ms.treatment_accuracy.value.to_string(),
        opt(ms.treatment_accuracy.ci.map(|i| i.lower)),
        opt(ms.treatment_accuracy.ci.map(|i| i.upper)),
        opt(ms.validation_accuracy),
        opt(ms.mse_iptw.as_ref().map(|m| m.value)),
        opt(ms.spearman.as_ref().map(|m| m.value)),
        c.estimate.n_effective.to_string(),
        d.dropped_strata.len().to_string(),
        opt(d.unmatched_treated),
        opt(d.unmatched_control),
        opt(bound.map(|b| b.arm_bound_t0)),
        opt(bound.map(|b| b.arm_bound_t1)),
        opt(bound.map(|b| b.ate_interval.0)),
        opt(bound.map(|b| b.ate_interval.1)),
        opt(bound.and_then(|b| b.tighter_than_empirical())),
    ]
}

/// Writes the report into `dir`: `report.json`, `report.csv`, or one
/// `<task>.svg` per task kind. Returns the written paths.
pub fn emit_report(report: &EvalReport, format: ReportFormat, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Json => {
            let path = dir.join("report.json");
            std::fs::write(&path, report.to_json()?)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let path = dir.join("report.csv");
            report.write_csv(std::fs::File::create(&path)?)?;
            Ok(vec![path])
        }
        ReportFormat::Svg => {
            let mut paths = Vec::new();
            for (task, doc) in svg::task_charts(report) {
                let path = dir.join(format!("{task}.svg"));
                std::fs::write(&path, doc)?;
                paths.push(path);
            }
            Ok(paths)
        }
    }
}
