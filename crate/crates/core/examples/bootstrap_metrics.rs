//! Scores a task with a fitted logistic model and reports treatment
//! accuracy, IPTW-weight MSE, Spearman correlation and ATE bias, each with
//! a percentile bootstrap interval.
//!
//!     cargo run --release --example bootstrap_metrics

use std::collections::BTreeMap;

use textconfound::corpus::{generate_base_corpus, split_corpus, GeneratorParams, SplitSizes};
use textconfound::estimators::{iptw_units, join, EvalUnit, IptwVariant};
use textconfound::metrics::{bootstrap_ci, mse_iptw, spearman, treatment_accuracy, BootstrapSpec};
use textconfound::propensity::{
    clip_scores, fit, predict, tokenize_all, FeatureKind, Featurizer, FeaturizerConfig, ModelSpec, ScoreSource,
};
use textconfound::taskgen::{generate_task, true_ate, TaskKind, TaskSpec};

type Statistic = Box<dyn Fn(&[EvalUnit]) -> textconfound::Result<f64> + Sync>;

fn main() -> textconfound::Result<()> {
    let sizes = SplitSizes {
        train: 1600,
        validation: 400,
        test: 2000,
    };
    let corpus = generate_base_corpus(sizes.total(), 2, &GeneratorParams::default())?;
    let split = split_corpus(&corpus, sizes, 2)?;
    let spec = TaskSpec::new(TaskKind::SignalIntensity, 1, sizes.train, 2)?;
    let ds = generate_task(&split, &spec)?;

    let model_spec = ModelSpec::logistic(FeatureKind::BigramCount);
    let train_tokens = tokenize_all(&ds.train);
    let featurizer = Featurizer::fit(FeatureKind::BigramCount, &train_tokens, &FeaturizerConfig::default())?;
    let model = fit(
        &model_spec,
        &featurizer.labeled(&train_tokens, &ds.train)?,
        &featurizer.labeled(&tokenize_all(&ds.validation), &ds.validation)?,
    )?;
    let test = featurizer.transform(&tokenize_all(&ds.test))?;
    let mut raw = BTreeMap::new();
    for (x, o) in test.iter().zip(&ds.test) {
        raw.insert(o.user_id.clone(), predict(&model, x)?);
    }
    let scores = clip_scores(raw, 0.01, ScoreSource::Model(model_spec.label()))?;
    let units = join(&ds.test, &scores)?;

    let boot = BootstrapSpec {
        resamples: 1000,
        level: 0.95,
        seed: 99,
    };
    let truth = true_ate(&spec);
    let stats: [(&str, Statistic); 4] = [
        ("treatment accuracy", Box::new(|u| treatment_accuracy(u, 0.5))),
        ("mse_iptw", Box::new(mse_iptw)),
        ("spearman", Box::new(spearman)),
        ("IPTW bias", Box::new(move |u| Ok(iptw_units(u, IptwVariant::PerArmHajek)?.value - truth))),
    ];
    for (name, stat) in &stats {
        let value = stat(&units)?;
        let r = bootstrap_ci(&units, &boot, stat)?;
        println!(
            "{name:<20} {value:+.4}  95% CI [{:+.4}, {:+.4}]  ({} valid, {} degenerate)",
            r.interval.lower, r.interval.upper, r.valid, r.degenerate
        );
    }
    Ok(())
}
