//! Propensity-score models: oracle and constant baselines, logistic
//! regression and a one-hidden-layer network over text features, and an
//! adapter for scores produced by external models.

mod features;
mod model;
mod scores;

pub use features::{tokenize_all, Featurizer, FeaturizerConfig};
pub use model::{
    fit, predict, EpochStats, FeatureKind, FittedModel, LabeledFeatures, ModelKind, ModelSpec, TrainParams,
    MODEL_FORMAT_VERSION,
};
pub use scores::{
    clip, clip_scores, constant_scores, external_scores_from, load_external_scores, oracle_scores, oracle_scores_for,
    read_scores_csv, write_scores_csv, ScoreSet, ScoreSource, DEFAULT_CLIP_EPSILON,
};
