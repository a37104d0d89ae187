use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::bounds::{bound_result, tightness_comparison, BoundResult};
use crate::corpus::{generate_base_corpus, load_corpus, split_corpus, Corpus, CorpusSplit};
use crate::error::{Error, Result};
use crate::estimators::{join, unadjusted_units, EstimatorSpec, EvalUnit, IptwVariant};
use crate::metrics::{
    bootstrap_ci, mse_iptw, spearman, treatment_accuracy, BootstrapSpec, Interval, MetricName, MetricValue,
};
use crate::propensity::{
    constant_scores, fit, load_external_scores, oracle_scores_for, predict, tokenize_all, FeatureKind, Featurizer,
    LabeledFeatures, ModelKind, ScoreSet, ScoreSource,
};
use crate::rng::derive_seed;
use crate::taskgen::{generate_task, true_ate, TaskDataset, TaskKind, TaskSpec};

use super::config::{CorpusSource, ModelConfig, RunConfig};
use super::report::{emit_report, BoundSummary, CellRecord, EvalReport, ModelSummary, ReportFormat, RunMetadata};

/// Loads or synthesizes the base corpus named by the config.
pub fn build_corpus(config: &RunConfig) -> Result<Corpus> {
    match &config.corpus {
        CorpusSource::Generate { n_users, params } => generate_base_corpus(
            n_users.unwrap_or(config.splits.total()),
            derive_seed(config.seed, &[b"corpus"]),
            params,
        ),
        CorpusSource::Path {
            path,
            max_posts,
            min_posts,
        } => load_corpus(path, *max_posts, *min_posts),
    }
}

pub fn build_split(config: &RunConfig) -> Result<CorpusSplit> {
    split_corpus(&build_corpus(config)?, config.splits, derive_seed(config.seed, &[b"split"]))
}

/// `(task, level)` pairs of the grid in config order, without repeats.
pub fn task_grid(config: &RunConfig) -> Vec<(TaskKind, u32)> {
    let mut out = Vec::new();
    for t in &config.tasks {
        for l in t.resolved_levels() {
            if !out.contains(&(t.kind, l)) {
                out.push((t.kind, l));
            }
        }
    }
    out
}

/// Every task uses the global seed for its data so that tasks share users'
/// latent classes and treatment draws.
pub fn task_spec(config: &RunConfig, kind: TaskKind, level: u32) -> Result<TaskSpec> {
    TaskSpec::new(kind, level, config.splits.train, config.seed)
}

pub fn generate_datasets(config: &RunConfig) -> Result<Vec<TaskDataset>> {
    config.validate()?;
    let split = build_split(config)?;
    task_grid(config)
        .into_iter()
        .map(|(kind, level)| generate_task(&split, &task_spec(config, kind, level)?))
        .collect()
}

fn cell_seed(config: &RunConfig, what: &[u8], task: TaskKind, level: u32, extra: &[&[u8]]) -> u64 {
    let level = level.to_le_bytes();
    let mut labels: Vec<&[u8]> = vec![what, task.as_str().as_bytes(), &level];
    labels.extend_from_slice(extra);
    derive_seed(config.seed, &labels)
}

struct FeatureSet {
    train: LabeledFeatures,
    validation: LabeledFeatures,
    test: LabeledFeatures,
}

struct ModelOutput {
    scores: ScoreSet,
    validation_accuracy: Option<f64>,
    epochs_run: Option<usize>,
    feature_dim: Option<usize>,
}

fn featurize(config: &RunConfig, dataset: &TaskDataset, kinds: &[FeatureKind]) -> Result<BTreeMap<FeatureKind, FeatureSet>> {
    if kinds.is_empty() {
        return Ok(BTreeMap::new());
    }
    let (kind, level) = (dataset.spec.kind, dataset.spec.level);
    let train_tok = tokenize_all(&dataset.train);
    let val_tok = tokenize_all(&dataset.validation);
    let test_tok = tokenize_all(&dataset.test);
    kinds
        .par_iter()
        .map(|&f| {
            let mut fc = config.features.clone();
            fc.lda.seed = cell_seed(config, b"lda", kind, level, &[&fc.lda.seed.to_le_bytes()]);
            let fz = Featurizer::fit(f, &train_tok, &fc)?;
            let set = FeatureSet {
                train: fz.labeled(&train_tok, &dataset.train)?,
                validation: fz.labeled(&val_tok, &dataset.validation)?,
                test: fz.labeled(&test_tok, &dataset.test)?,
            };
            Ok((f, set))
        })
        .collect()
}

fn model_scores(
    config: &RunConfig,
    dataset: &TaskDataset,
    model: &ModelConfig,
    features: &BTreeMap<FeatureKind, FeatureSet>,
) -> Result<ModelOutput> {
    let eps = config.clip_epsilon;
    let test = &dataset.test;
    let plain = |scores| ModelOutput {
        scores,
        validation_accuracy: None,
        epochs_run: None,
        feature_dim: None,
    };
    match model.spec.kind {
        ModelKind::Oracle => Ok(plain(oracle_scores_for(test, eps)?)),
        ModelKind::Unadjusted => {
            let frac = dataset.train.iter().filter(|o| o.treatment).count() as f64 / dataset.train.len() as f64;
            Ok(plain(constant_scores(test, frac, eps, "unadjusted")?))
        }
        ModelKind::External => {
            let path = model
                .scores_path(dataset.spec.kind, dataset.spec.level)
                .ok_or_else(|| Error::Parameter("external model without scores path".into()))?;
            Ok(plain(load_external_scores(path, dataset, eps)?))
        }
        ModelKind::Logistic | ModelKind::Neural => {
            let f = model.spec.features.expect("validated");
            let set = &features[&f];
            let mut spec = model.spec.clone();
            let label = model.label();
            spec.train.seed = cell_seed(
                config,
                b"model",
                dataset.spec.kind,
                dataset.spec.level,
                &[label.as_bytes(), &model.spec.train.seed.to_le_bytes()],
            );
            let fitted = fit(&spec, &set.train, &set.validation)?;
            let mut raw = BTreeMap::new();
            for (o, x) in test.iter().zip(&set.test.rows) {
                raw.insert(o.user_id.clone(), predict(&fitted, x)?);
            }
            Ok(ModelOutput {
                scores: crate::propensity::clip_scores(raw, eps, ScoreSource::Model(label))?,
                validation_accuracy: Some(fitted.validation_accuracy),
                epochs_run: Some(fitted.epochs_run),
                feature_dim: Some(set.train.dim),
            })
        }
    }
}

fn boot_spec(config: &RunConfig, seed: u64) -> BootstrapSpec {
    BootstrapSpec {
        resamples: config.bootstrap.resamples,
        level: config.bootstrap.level,
        seed,
    }
}

fn metric_with_ci<F>(config: &RunConfig, units: &[EvalUnit], name: MetricName, seed: u64, f: F) -> Result<MetricValue>
where
    F: Fn(&[EvalUnit]) -> Result<f64> + Sync,
{
    let point = MetricValue {
        name,
        value: f(units)?,
        ci: None,
    };
    if !config.bootstrap.model_metrics {
        return Ok(point);
    }
    Ok(point.with_bootstrap(&bootstrap_ci(units, &boot_spec(config, seed), f)?))
}

fn summarize_model(
    config: &RunConfig,
    task: TaskKind,
    level: u32,
    label: &str,
    units: &[EvalUnit],
    out: &ModelOutput,
) -> Result<ModelSummary> {
    let seed = |m: MetricName| cell_seed(config, b"bootstrap", task, level, &[label.as_bytes(), m.as_str().as_bytes()]);
    let thr = config.accuracy_threshold;
    let acc = metric_with_ci(config, units, MetricName::TreatmentAccuracy, seed(MetricName::TreatmentAccuracy), |s| {
        treatment_accuracy(s, thr)
    })?;
    let mse = metric_with_ci(config, units, MetricName::MseIptw, seed(MetricName::MseIptw), mse_iptw)?;
    let rho = match spearman(units) {
        Ok(_) => Some(metric_with_ci(config, units, MetricName::Spearman, seed(MetricName::Spearman), spearman)?),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ModelSummary {
        validation_accuracy: out.validation_accuracy,
        epochs_run: out.epochs_run,
        feature_dim: out.feature_dim,
        treatment_accuracy: acc,
        mse_iptw: Some(mse),
        spearman: rho,
        bound: Some(bound_result(units)?),
    })
}

fn bias_metric(estimator: &EstimatorSpec) -> MetricName {
    match estimator {
        EstimatorSpec::Unadjusted => MetricName::BiasUnadjusted,
        EstimatorSpec::Iptw { .. } => MetricName::BiasIptw,
        EstimatorSpec::Stratified { .. } => MetricName::BiasStrat,
        EstimatorSpec::Matched { .. } => MetricName::BiasMatch,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &RunConfig,
    task: TaskKind,
    level: u32,
    truth: f64,
    model: &str,
    units: &[EvalUnit],
    summary: &ModelSummary,
    unadjusted_value: f64,
    estimator: &EstimatorSpec,
) -> Result<CellRecord> {
    let label = estimator.label();
    let estimate = estimator.estimate(units)?;
    let seed = cell_seed(config, b"bootstrap", task, level, &[model.as_bytes(), label.as_bytes()]);
    let boot = bootstrap_ci(units, &boot_spec(config, seed), |s| Ok(estimator.estimate(s)?.value))?;
    let value_ci = Interval {
        lower: boot.interval.lower.min(estimate.value),
        upper: boot.interval.upper.max(estimate.value),
        level: boot.interval.level,
    };
    let bias = MetricValue {
        name: bias_metric(estimator),
        value: estimate.value - truth,
        ci: Some(Interval {
            lower: value_ci.lower - truth,
            upper: value_ci.upper - truth,
            level: value_ci.level,
        }),
    };
    let bound = summary.bound.clone().map(|b| BoundResult {
        tightness: Some(tightness_comparison(b.ate_interval, &value_ci, unadjusted_value)),
        ..b
    });
    Ok(CellRecord {
        task,
        level,
        model: model.to_string(),
        estimator: label,
        true_ate: truth,
        estimate,
        estimate_ci: Some(value_ci),
        bias,
        model_summary: summary.clone(),
        bound,
        clip_epsilon: config.clip_epsilon,
    })
}

fn run_task(config: &RunConfig, split: &CorpusSplit, task: TaskKind, level: u32) -> Result<Vec<CellRecord>> {
    let spec = task_spec(config, task, level)?;
    let dataset = generate_task(split, &spec)?;
    let truth = true_ate(&spec);
    let mut kinds: Vec<FeatureKind> = config
        .models
        .iter()
        .filter(|m| matches!(m.spec.kind, ModelKind::Logistic | ModelKind::Neural))
        .filter_map(|m| m.spec.features)
        .collect();
    kinds.sort();
    kinds.dedup();
    let features = featurize(config, &dataset, &kinds).map_err(|e| e.in_cell(format!("{task}/{level}")))?;

    let per_model: Vec<Result<Vec<CellRecord>>> = config
        .models
        .par_iter()
        .map(|m| {
            let label = m.label();
            let wrap = |e: Error| e.in_cell(format!("{task}/{level}/{label}"));
            let out = model_scores(config, &dataset, m, &features).map_err(wrap)?;
            let units = join(&dataset.test, &out.scores).map_err(wrap)?;
            let summary = summarize_model(config, task, level, &label, &units, &out).map_err(wrap)?;
            let unadjusted_value = unadjusted_units(&units).map_err(wrap)?.value;
            config
                .estimators
                .par_iter()
                .map(|e| {
                    run_cell(config, task, level, truth, &label, &units, &summary, unadjusted_value, e)
                        .map_err(|err| err.in_cell(format!("{task}/{level}/{label}/{}", e.label())))
                })
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    for r in per_model {
        cells.extend(r?);
    }
    Ok(cells)
}

fn bound_summary(config: &RunConfig, cells: &[CellRecord]) -> BoundSummary {
    let learned: Vec<String> = config
        .models
        .iter()
        .filter(|m| matches!(m.spec.kind, ModelKind::Logistic | ModelKind::Neural | ModelKind::External))
        .map(|m| m.label())
        .collect();
    let hajek = EstimatorSpec::Iptw {
        variant: IptwVariant::PerArmHajek,
    }
    .label();
    let compared: Vec<_> = cells
        .iter()
        .filter(|c| c.estimator == hajek && learned.contains(&c.model))
        .filter_map(|c| c.bound.as_ref().and_then(|b| b.tightness))
        .collect();
    let tighter = compared.iter().filter(|t| t.empirical_tighter).count();
    BoundSummary {
        cells_compared: compared.len(),
        empirical_tighter: tighter,
        fraction_empirical_tighter: (!compared.is_empty()).then(|| tighter as f64 / compared.len() as f64),
        unadjusted_within_bound: compared.iter().filter(|t| t.unadjusted_within_bound).count(),
    }
}

fn assemble(config: &RunConfig, cells: Vec<CellRecord>, started: Instant, error: Option<String>) -> EvalReport {
    EvalReport {
        metadata: RunMetadata {
            config_hash: config.config_hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            clip_epsilon: config.clip_epsilon,
            bootstrap_resamples: config.bootstrap.resamples,
            bootstrap_level: config.bootstrap.level,
            wall_time_seconds: started.elapsed().as_secs_f64(),
            error,
        },
        bound_summary: bound_summary(config, &cells),
        config: config.clone(),
        cells,
    }
}

/// Runs every (task, level, model, estimator) cell of the grid.
///
/// Cells are independent given the config: each draws from seeds derived
/// from the global seed and its coordinates, so a sub-grid reproduces the
/// matching cells of a larger grid. On failure, completed cells are written
/// to `output_dir/partial_report.json` (when an output directory is set)
/// before the error is returned.
pub fn run_experiment(config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<EvalReport> {
    let started = Instant::now();
    let split = build_split(config)?;
    let grid = task_grid(config);
    let results: Vec<Result<Vec<CellRecord>>> = grid
        .par_iter()
        .map(|&(task, level)| run_task(config, &split, task, level))
        .collect();
    let mut cells = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(c) => cells.extend(c),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    if let Some(err) = first_error {
        if let Some(dir) = &config.output_dir {
            let partial = assemble(config, cells, started, Some(err.to_string()));
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("partial_report.json"), partial.to_json()?)?;
        }
        return Err(err);
    }
    let report = assemble(config, cells, started, None);
    if let Some(dir) = &config.output_dir {
        emit_report(&report, ReportFormat::Json, dir)?;
    }
    Ok(report)
}
