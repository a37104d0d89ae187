use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{GeneratorParams, SplitSizes, DEFAULT_MAX_POSTS, DEFAULT_MIN_POSTS};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::propensity::{FeaturizerConfig, ModelKind, ModelSpec, DEFAULT_CLIP_EPSILON};
use crate::taskgen::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum CorpusSource {
    /// Synthesize a base corpus; `n_users` defaults to the total split size.
    Generate {
        #[serde(default)]
        n_users: Option<usize>,
        #[serde(default)]
        params: GeneratorParams,
    },
    /// JSONL file with `{"user_id", "posts": [{"text"}]}` records.
    Path {
        path: PathBuf,
        #[serde(default = "default_max_posts")]
        max_posts: usize,
        #[serde(default = "default_min_posts")]
        min_posts: usize,
    },
}

fn default_max_posts() -> usize {
    DEFAULT_MAX_POSTS
}

fn default_min_posts() -> usize {
    DEFAULT_MIN_POSTS
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Generate {
            n_users: None,
            params: GeneratorParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSelection {
    pub kind: TaskKind,
    /// All levels of the task when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<u32>>,
}

impl TaskSelection {
    pub fn all(kind: TaskKind) -> Self {
        TaskSelection { kind, levels: None }
    }

    pub fn level(kind: TaskKind, level: u32) -> Self {
        TaskSelection {
            kind,
            levels: Some(vec![level]),
        }
    }

    pub fn resolved_levels(&self) -> Vec<u32> {
        match &self.levels {
            Some(l) => l.clone(),
            None => self.kind.levels().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub spec: ModelSpec,
    /// For external models: scores CSV path. `{task}` and `{level}` are
    /// replaced by the task name and level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<String>,
    /// Overrides the label used in reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ModelConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec.label())
    }

    pub fn scores_path(&self, task: TaskKind, level: u32) -> Option<PathBuf> {
        self.scores.as_ref().map(|s| {
            PathBuf::from(
                s.replace("{task}", task.as_str())
                    .replace("{level}", &level.to_string()),
            )
        })
    }
}

impl From<ModelSpec> for ModelConfig {
    fn from(spec: ModelSpec) -> Self {
        ModelConfig {
            spec,
            scores: None,
            name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    /// Also bootstrap accuracy, weight MSE and rank correlation per model.
    pub model_metrics: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.95,
            model_metrics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub corpus: CorpusSource,
    #[serde(default)]
    pub splits: SplitSizes,
    pub tasks: Vec<TaskSelection>,
    pub models: Vec<ModelConfig>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub features: FeaturizerConfig,
    #[serde(default = "default_clip")]
    pub clip_epsilon: f64,
    #[serde(default = "default_threshold")]
    pub accuracy_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_EPSILON
}

fn default_threshold() -> f64 {
    0.5
}

impl RunConfig {
    /// A config with default corpus, splits, bootstrap and features.
    pub fn new(seed: u64, tasks: Vec<TaskSelection>, models: Vec<ModelConfig>, estimators: Vec<EstimatorSpec>) -> Self {
        RunConfig {
            seed,
            corpus: CorpusSource::default(),
            splits: SplitSizes::default(),
            tasks,
            models,
            estimators,
            bootstrap: BootstrapConfig::default(),
            features: FeaturizerConfig::default(),
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            accuracy_threshold: 0.5,
            output_dir: None,
            workers: None,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.as_ref().to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() || self.models.is_empty() || self.estimators.is_empty() {
            return Err(Error::Parameter("task, model and estimator grids must be nonempty".into()));
        }
        for t in &self.tasks {
            let levels = t.resolved_levels();
            if levels.is_empty() {
                return Err(Error::Parameter(format!("{}: empty level list", t.kind)));
            }
            for &l in &levels {
                if l == 0 || l > t.kind.max_level() {
                    return Err(Error::Spec(format!("{} has levels 1..={}, got {l}", t.kind, t.kind.max_level())));
                }
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for m in &self.models {
            m.spec.validate()?;
            if (m.spec.kind == ModelKind::External) != m.scores.is_some() {
                return Err(Error::Parameter(format!("{}: a scores path is required exactly for external models", m.label())));
            }
            if !labels.insert(m.label()) {
                return Err(Error::Parameter(format!("duplicate model label {}", m.label())));
            }
        }
        for e in &self.estimators {
            e.validate()?;
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return Err(Error::Parameter(format!("clip epsilon must lie in (0, 0.5), got {}", self.clip_epsilon)));
        }
        if self.bootstrap.resamples < 2 || !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(Error::Parameter("bootstrap needs >= 2 resamples and a level in (0, 1)".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Parameter("workers must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every field that affects results
    /// (everything except the output directory and worker count).
    pub fn config_hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.output_dir = None;
        semantic.workers = None;
        let json = serde_json::to_vec(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
