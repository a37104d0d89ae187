//! Text featurization: tokenization, n-gram vocabularies, binary and count
//! encodings, and LDA topic proportions.

pub mod lda;
mod tokenize;
mod vocab;

pub use lda::{fit_lda, fit_lda_with, lda_features, LdaConfig, LdaModel};
pub use tokenize::{tokenize, TokenSequence};
pub use vocab::{
    build_vocab, tokenize_history, vectorize, vectorize_tokens, Encoding, FeatureMode, FeatureVector, NgramRange,
    Vocab, VocabEntry,
};
