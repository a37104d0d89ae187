//! Synthesizes a base corpus, splits it, and generates every difficulty
//! level of one task. Prints class balance and treated/outcome rates, and
//! writes the level-1 dataset as JSONL to a temp dir.
//!
//!     cargo run --release --example generate_tasks

use textconfound::corpus::{generate_base_corpus, split_corpus, GeneratorParams, SplitSizes};
use textconfound::taskgen::{generate_task, true_ate, LatentClass, TaskKind, TaskSpec};

fn main() -> textconfound::Result<()> {
    let sizes = SplitSizes {
        train: 800,
        validation: 200,
        test: 1000,
    };
    let corpus = generate_base_corpus(sizes.total(), 7, &GeneratorParams::default())?;
    let split = split_corpus(&corpus, sizes, 7)?;

    let kind = TaskKind::SignalIntensity;
    for level in kind.levels() {
        let spec = TaskSpec::new(kind, level, sizes.train, 7)?;
        let ds = generate_task(&split, &spec)?;
        let n = ds.test.len() as f64;
        let class1 = ds.test.iter().filter(|o| o.latent_class == LatentClass::One).count() as f64 / n;
        let treated = ds.test.iter().filter(|o| o.treatment).count() as f64 / n;
        let outcome = ds.test.iter().filter(|o| o.outcome).count() as f64 / n;
        let extra: usize = ds.test.iter().map(|o| o.history.posts.len()).sum::<usize>()
            - split.test.users.iter().map(|u| u.posts.len()).sum::<usize>();
        println!(
            "{kind} level {level}: class1 {class1:.3}, treated {treated:.3}, Y=1 {outcome:.3}, \
             true ATE {:.2}, synthetic posts added to test {extra}",
            true_ate(&spec)
        );
        if level == 1 {
            let path = std::env::temp_dir().join("signal_intensity_level1.jsonl");
            ds.write_jsonl(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}
