//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Fitting samples topic assignments for every token of the training
//! documents and keeps the smoothed topic-word counts of the final sweep.
//! Inference for new documents runs the same sampler with the topic-word
//! distributions held fixed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{FeatureMode, FeatureVector};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

pub const LDA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    /// Document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub fit_iterations: usize,
    pub infer_iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 20,
            alpha: None,
            beta: 0.01,
            fit_iterations: 1000,
            infer_iterations: 100,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LdaModelFile {
    version: u32,
    topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    iterations: usize,
    infer_iterations: usize,
    topic_word: Vec<Vec<f64>>,
}

/// Fitted topic model; `topic_word[k]` is a probability vector over columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LdaModelFile", into = "LdaModelFile")]
pub struct LdaModel {
    pub topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub infer_iterations: usize,
    topic_word: Vec<Vec<f64>>,
    // word-major copy of topic_word for the inference loop
    word_topic: Vec<f64>,
}

impl LdaModel {
    pub fn topic_word(&self) -> &[Vec<f64>] {
        &self.topic_word
    }

    fn from_file(f: LdaModelFile) -> Result<LdaModel> {
        if f.version != LDA_FORMAT_VERSION {
            return Err(Error::Parameter(format!("unsupported LDA model version {}", f.version)));
        }
        if f.topic_word.len() != f.topics || f.topic_word.iter().any(|r| r.len() != f.vocab_size) {
            return Err(Error::Parameter("topic_word shape does not match header".into()));
        }
        let mut word_topic = vec![0.0; f.vocab_size * f.topics];
        for (k, row) in f.topic_word.iter().enumerate() {
            for (w, &p) in row.iter().enumerate() {
                word_topic[w * f.topics + k] = p;
            }
        }
        Ok(LdaModel {
            topics: f.topics,
            vocab_size: f.vocab_size,
            alpha: f.alpha,
            beta: f.beta,
            seed: f.seed,
            iterations: f.iterations,
            infer_iterations: f.infer_iterations,
            topic_word: f.topic_word,
            word_topic,
        })
    }
}

impl TryFrom<LdaModelFile> for LdaModel {
    type Error = Error;
    fn try_from(f: LdaModelFile) -> Result<Self> {
        LdaModel::from_file(f)
    }
}

impl From<LdaModel> for LdaModelFile {
    fn from(m: LdaModel) -> Self {
        LdaModelFile {
            version: LDA_FORMAT_VERSION,
            topics: m.topics,
            vocab_size: m.vocab_size,
            alpha: m.alpha,
            beta: m.beta,
            seed: m.seed,
            iterations: m.iterations,
            infer_iterations: m.infer_iterations,
            topic_word: m.topic_word,
        }
    }
}

/// Expands count entries into one word id per token occurrence.
fn expand_tokens(v: &FeatureVector) -> Result<Vec<u32>> {
    let mut words = Vec::with_capacity(v.sum() as usize);
    for &(col, val) in &v.entries {
        if val < 0.0 || val.fract() != 0.0 {
            return Err(Error::Parameter(format!("LDA needs integer counts, got {val} at column {col}")));
        }
        words.extend(std::iter::repeat_n(col, val as usize));
    }
    Ok(words)
}

fn draw(weights: &[f64], total: f64, rng: &mut StreamRng) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// Fits with default priors (`alpha = 50/K`, `beta = 0.01`).
pub fn fit_lda(count_vectors: &[FeatureVector], topics: usize, seed: u64, iterations: usize) -> Result<LdaModel> {
    fit_lda_with(
        count_vectors,
        &LdaConfig {
            topics,
            seed,
            fit_iterations: iterations,
            ..LdaConfig::default()
        },
    )
}

pub fn fit_lda_with(count_vectors: &[FeatureVector], config: &LdaConfig) -> Result<LdaModel> {
    let k = config.topics;
    if k < 2 {
        return Err(Error::Parameter(format!("LDA needs at least 2 topics, got {k}")));
    }
    if count_vectors.iter().any(|v| v.mode != FeatureMode::Count) {
        return Err(Error::Parameter("LDA is fitted on count-mode vectors".into()));
    }
    let alpha = config.alpha();
    let beta = config.beta;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Parameter("LDA priors must be positive".into()));
    }
    let vocab_size = count_vectors.iter().map(|v| v.dim).max().unwrap_or(0);
    let docs: Vec<Vec<u32>> = count_vectors.iter().map(expand_tokens).collect::<Result<_>>()?;
    if vocab_size == 0 || docs.iter().all(|d| d.is_empty()) {
        return Err(Error::Fit("LDA corpus has no tokens".into()));
    }

    let mut rng = substream(config.seed, &[b"lda-fit"]);
    let mut doc_topic = vec![0u32; docs.len() * k];
    let mut word_topic = vec![0u32; vocab_size * k];
    let mut topic_total = vec![0u32; k];
    let mut assign: Vec<Vec<u16>> = Vec::with_capacity(docs.len());
    for (d, words) in docs.iter().enumerate() {
        let z: Vec<u16> = words
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                doc_topic[d * k + t] += 1;
                word_topic[w as usize * k + t] += 1;
                topic_total[t] += 1;
                t as u16
            })
            .collect();
        assign.push(z);
    }

    let v_beta = vocab_size as f64 * beta;
    let mut weights = vec![0.0; k];
    for _ in 0..config.fit_iterations {
        for (d, words) in docs.iter().enumerate() {
            let dt = &mut doc_topic[d * k..(d + 1) * k];
            for (i, &w) in words.iter().enumerate() {
                let w = w as usize;
                let old = assign[d][i] as usize;
                dt[old] -= 1;
                word_topic[w * k + old] -= 1;
                topic_total[old] -= 1;
                let wt = &word_topic[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    let p = (dt[t] as f64 + alpha) * (wt[t] as f64 + beta) / (topic_total[t] as f64 + v_beta);
                    weights[t] = p;
                    total += p;
                }
                let new = draw(&weights, total, &mut rng);
                assign[d][i] = new as u16;
                dt[new] += 1;
                word_topic[w * k + new] += 1;
                topic_total[new] += 1;
            }
        }
    }

    let topic_word: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let denom = topic_total[t] as f64 + v_beta;
            let mut row: Vec<f64> = (0..vocab_size)
                .map(|w| (word_topic[w * k + t] as f64 + beta) / denom)
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        })
        .collect();

    LdaModel::from_file(LdaModelFile {
        version: LDA_FORMAT_VERSION,
        topics: k,
        vocab_size,
        alpha,
        beta,
        seed: config.seed,
        iterations: config.fit_iterations,
        infer_iterations: config.infer_iterations,
        topic_word,
    })
}

/// Topic proportions of one count vector with the model's topics held fixed.
/// Empty documents get the uniform vector.
pub fn lda_features(count_vector: &FeatureVector, model: &LdaModel) -> Result<FeatureVector> {
    let k = model.topics;
    let words = expand_tokens(count_vector)?;
    if words.iter().any(|&w| w as usize >= model.vocab_size) {
        return Err(Error::Shape {
            expected: model.vocab_size,
            got: count_vector.dim,
        });
    }
    let mut theta = vec![1.0 / k as f64; k];
    if !words.is_empty() {
        let key: Vec<u8> = count_vector
            .entries
            .iter()
            .flat_map(|&(c, v)| c.to_le_bytes().into_iter().chain((v as u32).to_le_bytes()))
            .collect();
        let mut rng = substream(model.seed, &[b"lda-infer", &key]);
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0; k];
        for _ in 0..model.infer_iterations {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                let phi = &model.word_topic[w as usize * k..(w as usize + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    let p = (counts[t] as f64 + model.alpha) * phi[t];
                    weights[t] = p;
                    total += p;
                }
                let new = draw(&weights, total, &mut rng);
                z[i] = new;
                counts[new] += 1;
            }
        }
        let denom = words.len() as f64 + k as f64 * model.alpha;
        for t in 0..k {
            theta[t] = (counts[t] as f64 + model.alpha) / denom;
        }
        let s: f64 = theta.iter().sum();
        theta.iter_mut().for_each(|p| *p /= s);
    }
    Ok(FeatureVector {
        dim: k,
        mode: FeatureMode::Topic,
        entries: theta.into_iter().enumerate().map(|(t, p)| (t as u32, p)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(dim: usize, entries: &[(u32, f64)]) -> FeatureVector {
        FeatureVector {
            dim,
            mode: FeatureMode::Count,
            entries: entries.to_vec(),
        }
    }

    /// Documents 0 and 1 use columns 0..5 and 5..10 respectively.
    fn disjoint_corpus() -> Vec<FeatureVector> {
        vec![
            counts(10, &[(0, 30.0), (1, 25.0), (2, 20.0), (3, 15.0), (4, 10.0)]),
            counts(10, &[(5, 30.0), (6, 25.0), (7, 20.0), (8, 15.0), (9, 10.0)]),
        ]
    }

    fn argmax(v: &FeatureVector) -> usize {
        v.to_dense()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn rows_are_probability_vectors() {
        let docs: Vec<FeatureVector> = (0..30u32)
            .map(|i| {
                let (a, b) = (i % 25, 25 + (i * 7) % 25);
                counts(50, &[(a, 3.0), (b, 1.0)])
            })
            .collect();
        let m = fit_lda(&docs, 20, 3, 50).unwrap();
        assert_eq!(m.topic_word().len(), 20);
        for row in m.topic_word() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let a = fit_lda(&disjoint_corpus(), 2, 9, 100).unwrap();
        let b = fit_lda(&disjoint_corpus(), 2, 9, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disjoint_documents_separate() {
        let m = fit_lda_with(
            &disjoint_corpus(),
            &LdaConfig {
                topics: 2,
                alpha: Some(0.1),
                fit_iterations: 500,
                seed: 1,
                ..LdaConfig::default()
            },
        )
        .unwrap();
        let docs = disjoint_corpus();
        let t0 = lda_features(&docs[0], &m).unwrap();
        let t1 = lda_features(&docs[1], &m).unwrap();
        assert_ne!(argmax(&t0), argmax(&t1));

        // a long document drawn only from one topic's support
        let pure = counts(10, &[(0, 120.0), (1, 100.0), (2, 80.0), (3, 60.0), (4, 40.0)]);
        let theta = lda_features(&pure, &m).unwrap();
        assert!(theta.to_dense()[argmax(&t0)] > 0.9, "{:?}", theta);
    }

    #[test]
    fn default_prior_topic_proportion_on_pure_document() {
        let m = fit_lda(&disjoint_corpus(), 2, 4, 500).unwrap();
        let t0 = lda_features(&disjoint_corpus()[0], &m).unwrap();
        let pure = counts(10, &[(0, 300.0), (1, 250.0), (2, 200.0), (3, 150.0), (4, 100.0)]);
        let theta = lda_features(&pure, &m).unwrap();
        assert!(theta.to_dense()[argmax(&t0)] > 0.9, "{:?}", theta);
    }

    #[test]
    fn empty_document_is_uniform() {
        let m = fit_lda(&disjoint_corpus(), 4, 1, 20).unwrap();
        let theta = lda_features(&counts(10, &[]), &m).unwrap();
        assert_eq!(theta.to_dense(), vec![0.25; 4]);
        assert_eq!(theta.mode, FeatureMode::Topic);
    }

    #[test]
    fn inferred_proportions_sum_to_one() {
        let m = fit_lda(&disjoint_corpus(), 3, 1, 50).unwrap();
        for d in disjoint_corpus() {
            let theta = lda_features(&d, &m).unwrap();
            assert!((theta.sum() - 1.0).abs() < 1e-9);
            assert_eq!(theta, lda_features(&d, &m).unwrap());
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_lda(&[counts(5, &[])], 2, 0, 10), Err(Error::Fit(_))));
        assert!(matches!(fit_lda(&disjoint_corpus(), 1, 0, 10), Err(Error::Parameter(_))));
        let mut binary = disjoint_corpus();
        binary[0].mode = FeatureMode::Binary;
        assert!(fit_lda(&binary, 2, 0, 10).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = fit_lda(&disjoint_corpus(), 2, 2, 30).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"version\":1"));
        let back: LdaModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
