//! Semi-synthetic benchmark for causal inference from text.
//!
//! Users' post histories are turned into tasks with known treatment effects;
//! propensity models are fitted on the text and their scores are judged by
//! the ATE estimates they produce.

pub mod bounds;
pub mod corpus;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod pipeline;
pub mod propensity;
pub mod rng;
pub mod taskgen;
pub mod textfeat;

pub use error::{Error, Result};
