//! End-to-end experiment runs: config, execution over the grid, and reports.

mod config;
mod report;
mod run;
mod svg;

pub use config::{BootstrapConfig, CorpusSource, ModelConfig, RunConfig, TaskSelection};
pub use report::{emit_report, BoundSummary, CellRecord, EvalReport, ModelSummary, ReportFormat, RunMetadata};
pub use run::{build_corpus, build_split, generate_datasets, run_experiment, task_grid, task_spec};
pub use svg::task_charts;
