//! Tokenizes a task dataset and builds each feature representation,
//! reporting dimensionality and sparsity.
//!
//!     cargo run --release --example featurize

use textconfound::corpus::{generate_base_corpus, split_corpus, GeneratorParams, SplitSizes};
use textconfound::propensity::{tokenize_all, FeatureKind, Featurizer, FeaturizerConfig};
use textconfound::taskgen::{generate_task, TaskKind, TaskSpec};
use textconfound::textfeat::tokenize;

fn main() -> textconfound::Result<()> {
    println!("{:?}", tokenize("I shouldn't have eaten that... Parkinson's is rough!").tokens());

    let sizes = SplitSizes {
        train: 800,
        validation: 200,
        test: 1000,
    };
    let corpus = generate_base_corpus(sizes.total(), 3, &GeneratorParams::default())?;
    let split = split_corpus(&corpus, sizes, 3)?;
    let ds = generate_task(&split, &TaskSpec::new(TaskKind::LinguisticComplexity, 1, sizes.train, 3)?)?;
    let train = tokenize_all(&ds.train);
    let test = tokenize_all(&ds.test);

    let mut config = FeaturizerConfig::default();
    // A short Gibbs run keeps the example quick.
    config.lda.fit_iterations = 50;
    config.lda.infer_iterations = 20;
    for kind in FeatureKind::ALL {
        let f = Featurizer::fit(kind, &train, &config)?;
        let rows = f.transform(&test)?;
        let nnz: usize = rows.iter().map(|r| r.entries.len()).sum();
        println!(
            "{:<15} dim {:>6}  mean nonzeros/user {:>8.1}",
            kind.as_str(),
            f.dim(),
            nnz as f64 / rows.len() as f64
        );
    }
    Ok(())
}
