//! The plug-in path for an outside scorer: export a task as JSONL, write a
//! `user_id,score` CSV as an external model would, then evaluate it.
//!
//!     cargo run --release --example external_scores

use std::collections::BTreeMap;

use textconfound::corpus::SplitSizes;
use textconfound::estimators::EstimatorSpec;
use textconfound::pipeline::{generate_datasets, run_experiment, ModelConfig, RunConfig, TaskSelection};
use textconfound::propensity::{write_scores_csv, ModelSpec};
use textconfound::taskgen::{TaskDataset, TaskKind};

fn main() -> textconfound::Result<()> {
    let dir = std::env::temp_dir().join("textconfound_external");
    std::fs::create_dir_all(&dir)?;
    let mut config = RunConfig::new(
        3,
        vec![TaskSelection::level(TaskKind::LinguisticComplexity, 1)],
        vec![ModelConfig {
            spec: ModelSpec::external(),
            scores: Some(dir.join("scores.csv").display().to_string()),
            name: Some("keyword_scorer".into()),
        }],
        vec![EstimatorSpec::iptw(), EstimatorSpec::stratified()],
    );
    config.splits = SplitSizes {
        train: 800,
        validation: 200,
        test: 1000,
    };

    // What an external scorer receives...
    let ds = generate_datasets(&config)?.remove(0);
    let jsonl = dir.join("task.jsonl");
    ds.write_jsonl(std::fs::File::create(&jsonl)?)?;
    let reread = TaskDataset::read_jsonl(ds.spec.clone(), std::io::BufReader::new(std::fs::File::open(&jsonl)?))?;

    // ...and what it sends back: a crude score that looks for a sickness
    // keyword in the history, standing in for a trained text model.
    let scores: BTreeMap<&str, f64> = reread
        .test
        .iter()
        .map(|o| {
            let text: String = o.history.posts.iter().map(|p| p.text.to_lowercase()).collect();
            let hit = ["diagnosed", "cancer", "leukemia", "hospital"].iter().any(|w| text.contains(w));
            (o.user_id.as_str(), if hit { 0.85 } else { 0.2 })
        })
        .collect();
    write_scores_csv(
        std::fs::File::create(dir.join("scores.csv"))?,
        scores.iter().map(|(k, v)| (*k, *v)),
    )?;

    let report = run_experiment(&config)?;
    for c in &report.cells {
        println!(
            "{} {}: estimate {:+.3} (truth {:.1}), treatment accuracy {:.3}",
            c.model, c.estimator, c.estimate.value, c.true_ate, c.model_summary.treatment_accuracy.value
        );
    }
    Ok(())
}
