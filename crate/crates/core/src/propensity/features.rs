//! Maps a [`FeatureKind`] to fitted text representations. Everything here is
//! fitted on the training split only and then applied to every split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{FeatureKind, LabeledFeatures};
use crate::error::Result;
use crate::taskgen::Observation;
use crate::textfeat::{
    build_vocab, fit_lda_with, lda_features, tokenize_history, vectorize_tokens, Encoding, FeatureVector, LdaConfig,
    LdaModel, NgramRange, TokenSequence, Vocab,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    /// N-grams seen fewer times than this in the training split are dropped.
    pub min_count: u64,
    pub lda: LdaConfig,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            min_count: 10,
            lda: LdaConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Featurizer {
    pub kind: FeatureKind,
    pub vocab: Vocab,
    pub lda: Option<LdaModel>,
}

fn ngram_setup(kind: FeatureKind) -> (NgramRange, Encoding) {
    match kind {
        FeatureKind::UnigramBinary => (NgramRange::Unigram, Encoding::Binary),
        FeatureKind::BigramBinary => (NgramRange::UnigramBigram, Encoding::Binary),
        // LDA runs on counted 1,2-grams
        FeatureKind::BigramCount | FeatureKind::Lda => (NgramRange::UnigramBigram, Encoding::Count),
    }
}

/// Tokenizes every history once; the result can be shared across feature kinds.
pub fn tokenize_all(observations: &[Observation]) -> Vec<Vec<TokenSequence>> {
    observations.par_iter().map(|o| tokenize_history(&o.history)).collect()
}

impl Featurizer {
    pub fn fit(kind: FeatureKind, train_tokens: &[Vec<TokenSequence>], config: &FeaturizerConfig) -> Result<Self> {
        let (range, encoding) = ngram_setup(kind);
        let vocab = build_vocab(train_tokens, range, config.min_count)?;
        let lda = if kind == FeatureKind::Lda {
            let counts: Vec<FeatureVector> = train_tokens
                .par_iter()
                .map(|posts| vectorize_tokens(posts, &vocab, encoding))
                .collect();
            Some(fit_lda_with(&counts, &config.lda)?)
        } else {
            None
        };
        Ok(Featurizer { kind, vocab, lda })
    }

    pub fn dim(&self) -> usize {
        match &self.lda {
            Some(m) => m.topics,
            None => self.vocab.len(),
        }
    }

    pub fn transform(&self, tokens: &[Vec<TokenSequence>]) -> Result<Vec<FeatureVector>> {
        let (_, encoding) = ngram_setup(self.kind);
        tokens
            .par_iter()
            .map(|posts| {
                let v = vectorize_tokens(posts, &self.vocab, encoding);
                match &self.lda {
                    Some(m) => lda_features(&v, m),
                    None => Ok(v),
                }
            })
            .collect()
    }

    /// Features paired with treatments, the only inputs a model sees.
    pub fn labeled(&self, tokens: &[Vec<TokenSequence>], observations: &[Observation]) -> Result<LabeledFeatures> {
        let rows = self.transform(tokens)?;
        LabeledFeatures::new(self.dim(), rows, observations.iter().map(|o| o.treatment).collect())
    }
}
