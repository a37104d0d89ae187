//! Trains logistic and neural propensity models on binary unigrams and
//! shows the early-stopping trace and held-out treatment accuracy.
//!
//!     cargo run --release --example fit_propensity

use textconfound::corpus::{generate_base_corpus, split_corpus, GeneratorParams, SplitSizes};
use textconfound::propensity::{fit, predict, tokenize_all, FeatureKind, Featurizer, FeaturizerConfig, ModelSpec};
use textconfound::taskgen::{generate_task, TaskKind, TaskSpec};

fn main() -> textconfound::Result<()> {
    let sizes = SplitSizes {
        train: 1600,
        validation: 400,
        test: 1000,
    };
    let corpus = generate_base_corpus(sizes.total(), 11, &GeneratorParams::default())?;
    let split = split_corpus(&corpus, sizes, 11)?;
    let ds = generate_task(&split, &TaskSpec::new(TaskKind::LinguisticComplexity, 1, sizes.train, 11)?)?;

    let train_tokens = tokenize_all(&ds.train);
    let featurizer = Featurizer::fit(FeatureKind::UnigramBinary, &train_tokens, &FeaturizerConfig::default())?;
    let train = featurizer.labeled(&train_tokens, &ds.train)?;
    let validation = featurizer.labeled(&tokenize_all(&ds.validation), &ds.validation)?;
    let test = featurizer.transform(&tokenize_all(&ds.test))?;

    for spec in [ModelSpec::logistic(FeatureKind::UnigramBinary), ModelSpec::neural(FeatureKind::UnigramBinary)] {
        let model = fit(&spec, &train, &validation)?;
        println!("{} (dim {}):", spec.label(), model.dim);
        for e in &model.history {
            println!(
                "  epoch {:>3}  train loss {:.4}  val loss {:.4}  val acc {:.4}",
                e.epoch, e.train_loss, e.validation_loss, e.validation_accuracy
            );
        }
        let correct = test
            .iter()
            .zip(&ds.test)
            .map(|(x, o)| predict(&model, x).map(|p| (p > 0.5) == o.treatment))
            .collect::<textconfound::Result<Vec<_>>>()?
            .into_iter()
            .filter(|&c| c)
            .count();
        println!(
            "  kept epoch {} of {}; test accuracy {:.4}",
            model.best_epoch,
            model.epochs_run,
            correct as f64 / test.len() as f64
        );
    }
    Ok(())
}
