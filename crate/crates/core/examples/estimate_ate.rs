//! Runs every estimator on the default confounded task with oracle scores
//! and with a constant (unadjusted) score, next to the true ATE.
//!
//!     cargo run --release --example estimate_ate

use textconfound::corpus::{generate_base_corpus, split_corpus, GeneratorParams, SplitSizes};
use textconfound::estimators::{join, EstimatorSpec, IptwVariant, MatchTies};
use textconfound::propensity::{constant_scores, oracle_scores};
use textconfound::taskgen::{generate_task, true_ate, TaskKind, TaskSpec};

fn main() -> textconfound::Result<()> {
    let sizes = SplitSizes::default();
    let corpus = generate_base_corpus(sizes.total(), 5, &GeneratorParams::default())?;
    let split = split_corpus(&corpus, sizes, 5)?;
    let spec = TaskSpec::new(TaskKind::LinguisticComplexity, 1, sizes.train, 5)?;
    let ds = generate_task(&split, &spec)?;
    println!("true ATE {:.3}", true_ate(&spec));

    let estimators = [
        EstimatorSpec::Unadjusted,
        EstimatorSpec::iptw(),
        EstimatorSpec::Iptw {
            variant: IptwVariant::SingleNormalizer,
        },
        EstimatorSpec::Stratified { k: 2 },
        EstimatorSpec::stratified(),
        EstimatorSpec::matched(),
        EstimatorSpec::Matched {
            caliper_mult: 0.2,
            ties: MatchTies::LowestId,
        },
    ];
    let treated = ds.train.iter().filter(|o| o.treatment).count() as f64 / ds.train.len() as f64;
    for (name, scores) in [
        ("oracle", oracle_scores(&ds)),
        ("constant", constant_scores(&ds.test, treated, 0.01, "constant")?),
    ] {
        let units = join(&ds.test, &scores)?;
        println!("{name} scores:");
        for e in &estimators {
            let est = e.estimate(&units)?;
            let d = &est.diagnostics;
            println!(
                "  {:<24} {:+.4}  n_eff {:>4}  dropped strata {:?}  unmatched {:?}/{:?}",
                e.label(),
                est.value,
                est.n_effective,
                d.dropped_strata,
                d.unmatched_treated,
                d.unmatched_control
            );
        }
    }
    Ok(())
}
