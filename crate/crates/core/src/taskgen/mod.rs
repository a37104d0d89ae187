//! Semi-synthetic task generation.
//!
//! Each user gets a latent class with probability one half each. The class
//! decides which synthetic posts are appended to the history, the treatment
//! probability, and the outcome probability given treatment. Text is the only
//! channel through which the class is observable.

pub mod templates;

use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Post, SynthKind, UserHistory};
use crate::error::{Error, Result};
use crate::rng::substream;

pub use templates::sample_post;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinguisticComplexity,
    SignalIntensity,
    SelectionEffect,
    SampleSize,
    Placebo,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::LinguisticComplexity,
        TaskKind::SignalIntensity,
        TaskKind::SelectionEffect,
        TaskKind::SampleSize,
        TaskKind::Placebo,
    ];

    /// Highest difficulty level; levels start at 1.
    pub fn max_level(self) -> u32 {
        match self {
            TaskKind::LinguisticComplexity => 4,
            TaskKind::SignalIntensity => 2,
            TaskKind::SelectionEffect => 2,
            TaskKind::SampleSize => 3,
            TaskKind::Placebo => 1,
        }
    }

    pub fn levels(self) -> impl Iterator<Item = u32> {
        1..=self.max_level()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::LinguisticComplexity => "linguistic_complexity",
            TaskKind::SignalIntensity => "signal_intensity",
            TaskKind::SelectionEffect => "selection_effect",
            TaskKind::SampleSize => "sample_size",
            TaskKind::Placebo => "placebo",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown task {s}; expected one of {:?}", TaskKind::ALL.map(TaskKind::as_str)))
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Latent confounder. Serialized as the integer 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum LatentClass {
    One,
    Two,
}

impl From<LatentClass> for u8 {
    fn from(c: LatentClass) -> u8 {
        match c {
            LatentClass::One => 1,
            LatentClass::Two => 2,
        }
    }
}

impl TryFrom<u8> for LatentClass {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(LatentClass::One),
            2 => Ok(LatentClass::Two),
            other => Err(format!("class must be 1 or 2, got {other}")),
        }
    }
}

/// Treatment and outcome probabilities for one latent class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    /// P(T=1 | class)
    pub p_treat: f64,
    /// P(Y=1 | T=0, class)
    pub p_outcome_untreated: f64,
    /// P(Y=1 | T=1, class)
    pub p_outcome_treated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSpec {
    pub class1: ClassProbs,
    pub class2: ClassProbs,
}

impl AssignmentSpec {
    /// Treated with .9 in class 1 and .1 in class 2; the outcome is .9 except
    /// for untreated class-1 users, where it is .1.
    pub fn default_table() -> Self {
        AssignmentSpec {
            class1: ClassProbs {
                p_treat: 0.9,
                p_outcome_untreated: 0.1,
                p_outcome_treated: 0.9,
            },
            class2: ClassProbs {
                p_treat: 0.1,
                p_outcome_untreated: 0.9,
                p_outcome_treated: 0.9,
            },
        }
    }

    /// Default table with class-1 treatment raised to .95.
    pub fn strong_selection() -> Self {
        let mut a = Self::default_table();
        a.class1.p_treat = 0.95;
        a
    }

    /// Effects of +.9 in class 1 and -.9 in class 2, so the overall effect is 0.
    pub fn placebo() -> Self {
        AssignmentSpec {
            class1: ClassProbs {
                p_treat: 0.95,
                p_outcome_untreated: 0.05,
                p_outcome_treated: 0.95,
            },
            class2: ClassProbs {
                p_treat: 0.1,
                p_outcome_untreated: 0.95,
                p_outcome_treated: 0.05,
            },
        }
    }

    pub fn class(&self, class: LatentClass) -> &ClassProbs {
        match class {
            LatentClass::One => &self.class1,
            LatentClass::Two => &self.class2,
        }
    }

    pub fn p_treat(&self, class: LatentClass) -> f64 {
        self.class(class).p_treat
    }

    pub fn p_outcome(&self, class: LatentClass, treated: bool) -> f64 {
        let c = self.class(class);
        if treated {
            c.p_outcome_treated
        } else {
            c.p_outcome_untreated
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in [&self.class1, &self.class2] {
            for p in [c.p_treat, c.p_outcome_untreated, c.p_outcome_treated] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Spec(format!("probability {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Where appended synthetic posts come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PostSource {
    /// The same post every time.
    Fixed { text: String, kind: SynthKind },
    /// Uniform over the union of the listed kinds' posts.
    Uniform { kinds: Vec<SynthKind> },
}

/// History transform applied to every user of one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HistoryFn {
    Identity,
    /// Appends `count` independent draws after the last post.
    Append { count: usize, source: PostSource },
}

impl HistoryFn {
    fn append(count: usize, source: PostSource) -> Self {
        HistoryFn::Append { count, source }
    }

    fn one_sickness() -> Self {
        Self::append(1, PostSource::Uniform { kinds: vec![SynthKind::Sickness] })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryFns {
    pub class1: HistoryFn,
    pub class2: HistoryFn,
}

impl HistoryFns {
    pub fn for_class(&self, class: LatentClass) -> &HistoryFn {
        match class {
            LatentClass::One => &self.class1,
            LatentClass::Two => &self.class2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub level: u32,
    pub assignment: AssignmentSpec,
    pub history_fns: HistoryFns,
    pub train_size: usize,
    pub seed: u64,
}

impl TaskSpec {
    /// Standard definition of `kind` at `level`. `base_train_size` is the
    /// training split size; the sample-size task halves it per level.
    pub fn new(kind: TaskKind, level: u32, base_train_size: usize, seed: u64) -> Result<TaskSpec> {
        check_level(kind, level)?;
        use SynthKind::*;
        let identity = HistoryFn::Identity;
        let (class1, class2) = match (kind, level) {
            (TaskKind::LinguisticComplexity, 1) => (
                HistoryFn::append(
                    1,
                    PostSource::Fixed {
                        text: templates::fixed_sickness_text(),
                        kind: Sickness,
                    },
                ),
                identity,
            ),
            (TaskKind::LinguisticComplexity, l) => {
                let kinds = match l {
                    2 => vec![Sickness],
                    3 => vec![Sickness, Isolation],
                    _ => vec![Sickness, Isolation, Death],
                };
                (HistoryFn::append(1, PostSource::Uniform { kinds }), identity)
            }
            (TaskKind::SignalIntensity, 1) => (
                HistoryFn::append(10, PostSource::Uniform { kinds: vec![Sickness] }),
                identity,
            ),
            (TaskKind::SignalIntensity, _) => (
                HistoryFn::append(3, PostSource::Uniform { kinds: vec![Sickness] }),
                HistoryFn::append(1, PostSource::Uniform { kinds: vec![Sickness] }),
            ),
            _ => (HistoryFn::one_sickness(), identity),
        };
        let assignment = match (kind, level) {
            (TaskKind::SelectionEffect, 2) => AssignmentSpec::strong_selection(),
            (TaskKind::Placebo, _) => AssignmentSpec::placebo(),
            _ => AssignmentSpec::default_table(),
        };
        let train_size = match kind {
            TaskKind::SampleSize => base_train_size >> (level - 1),
            _ => base_train_size,
        };
        if train_size == 0 {
            return Err(Error::Spec(format!("{kind} level {level} leaves an empty training set")));
        }
        Ok(TaskSpec {
            kind,
            level,
            assignment,
            history_fns: HistoryFns { class1, class2 },
            train_size,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_level(self.kind, self.level)?;
        self.assignment.validate()?;
        if self.train_size == 0 {
            return Err(Error::Spec("train_size must be positive".into()));
        }
        for f in [&self.history_fns.class1, &self.history_fns.class2] {
            if let HistoryFn::Append {
                source: PostSource::Uniform { kinds },
                ..
            } = f
            {
                if kinds.is_empty() {
                    return Err(Error::Spec("uniform post source needs at least one kind".into()));
                }
            }
        }
        Ok(())
    }
}

fn check_level(kind: TaskKind, level: u32) -> Result<()> {
    if level == 0 || level > kind.max_level() {
        return Err(Error::Spec(format!(
            "{kind} has levels 1..={}, got {level}",
            kind.max_level()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub user_id: String,
    pub history: UserHistory,
    pub latent_class: LatentClass,
    pub treatment: bool,
    pub outcome: bool,
    pub true_propensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub spec: TaskSpec,
    pub train: Vec<Observation>,
    pub validation: Vec<Observation>,
    pub test: Vec<Observation>,
}

/// Class 1 or 2 with probability one half each.
pub fn assign_class<R: Rng + ?Sized>(rng: &mut R) -> LatentClass {
    if rng.random_bool(0.5) {
        LatentClass::One
    } else {
        LatentClass::Two
    }
}

/// Applies the class's history transform. Appended posts follow the last
/// existing post in draw order.
pub fn apply_history_fn<R: Rng + ?Sized>(
    history: &UserHistory,
    spec: &TaskSpec,
    class: LatentClass,
    rng: &mut R,
) -> Result<UserHistory> {
    check_level(spec.kind, spec.level)?;
    let mut out = history.clone();
    match spec.history_fns.for_class(class) {
        HistoryFn::Identity => {}
        HistoryFn::Append { count, source } => {
            out.posts.reserve(*count);
            for _ in 0..*count {
                let post = match source {
                    PostSource::Fixed { text, kind } => Post::synthetic(text.clone(), *kind),
                    PostSource::Uniform { kinds } => {
                        if kinds.is_empty() {
                            return Err(Error::Spec("uniform post source needs at least one kind".into()));
                        }
                        templates::sample_post_from(kinds, rng)
                    }
                };
                out.posts.push(post);
            }
        }
    }
    Ok(out)
}

/// Draws (treatment, outcome): one uniform for the treatment, then one for
/// the outcome given the drawn treatment.
pub fn assign_treatment_outcome<R: Rng + ?Sized>(
    class: LatentClass,
    assignment: &AssignmentSpec,
    rng: &mut R,
) -> (bool, bool) {
    let u: f64 = rng.random();
    let treated = u < assignment.p_treat(class);
    let v: f64 = rng.random();
    let outcome = v < assignment.p_outcome(class, treated);
    (treated, outcome)
}

/// Builds one observation from a base history. All randomness comes from
/// per-user streams keyed by `(spec.seed, user_id)`.
pub fn generate_observation(history: &UserHistory, spec: &TaskSpec) -> Result<Observation> {
    let uid = history.user_id.as_bytes();
    let class = assign_class(&mut substream(spec.seed, &[b"class", uid]));
    let mut hist_rng = substream(spec.seed, &[b"history", uid]);
    let transformed = apply_history_fn(history, spec, class, &mut hist_rng)?;
    let (treatment, outcome) =
        assign_treatment_outcome(class, &spec.assignment, &mut substream(spec.seed, &[b"assign", uid]));
    Ok(Observation {
        user_id: history.user_id.clone(),
        history: transformed,
        latent_class: class,
        treatment,
        outcome,
        true_propensity: spec.assignment.p_treat(class),
    })
}

/// Generates the full task dataset from a corpus split.
pub fn generate_task(split: &CorpusSplit, spec: &TaskSpec) -> Result<TaskDataset> {
    spec.validate()?;
    if split.train.len() < spec.train_size {
        return Err(Error::Size {
            requested: spec.train_size,
            available: split.train.len(),
        });
    }
    if split.test.is_empty() {
        return Err(Error::Size {
            requested: 1,
            available: 0,
        });
    }
    let train_users: Vec<&UserHistory> = if split.train.len() > spec.train_size {
        let mut rng = substream(spec.seed, &[b"subsample", spec.kind.as_str().as_bytes(), &spec.level.to_le_bytes()]);
        let mut picked = index::sample(&mut rng, split.train.len(), spec.train_size).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| &split.train.users[i]).collect()
    } else {
        split.train.users.iter().collect()
    };
    let run = |users: &mut dyn Iterator<Item = &UserHistory>| -> Result<Vec<Observation>> {
        users.map(|h| generate_observation(h, spec)).collect()
    };
    Ok(TaskDataset {
        spec: spec.clone(),
        train: run(&mut train_users.into_iter())?,
        validation: run(&mut split.validation.users.iter())?,
        test: run(&mut split.test.users.iter())?,
    })
}

/// Population ATE implied by the assignment table with equal class weights.
pub fn true_ate(spec: &TaskSpec) -> f64 {
    [LatentClass::One, LatentClass::Two]
        .iter()
        .map(|&c| 0.5 * (spec.assignment.p_outcome(c, true) - spec.assignment.p_outcome(c, false)))
        .sum()
}

#[derive(Serialize, Deserialize)]
struct DatasetRow {
    user_id: String,
    posts: Vec<Post>,
    class: LatentClass,
    treatment: u8,
    outcome: u8,
    true_propensity: f64,
    split: SplitName,
}

impl TaskDataset {
    pub fn split(&self, name: SplitName) -> &[Observation] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// One JSON object per observation, train then validation then test.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for o in self.split(name) {
                let row = DatasetRow {
                    user_id: o.user_id.clone(),
                    posts: o.history.posts.clone(),
                    class: o.latent_class,
                    treatment: o.treatment as u8,
                    outcome: o.outcome as u8,
                    true_propensity: o.true_propensity,
                    split: name,
                };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Reads rows written by [`TaskDataset::write_jsonl`]; the spec is not
    /// part of the file and must be supplied.
    pub fn read_jsonl<R: BufRead>(spec: TaskSpec, reader: R) -> Result<TaskDataset> {
        let mut ds = TaskDataset {
            spec,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: DatasetRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: "<task dataset>".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let to_bool = |v: u8, what: &str| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Parse {
                    path: "<task dataset>".into(),
                    line: i + 1,
                    message: format!("{what} must be 0 or 1"),
                }),
            };
            let obs = Observation {
                history: UserHistory {
                    user_id: row.user_id.clone(),
                    posts: row.posts,
                },
                user_id: row.user_id,
                latent_class: row.class,
                treatment: to_bool(row.treatment, "treatment")?,
                outcome: to_bool(row.outcome, "outcome")?,
                true_propensity: row.true_propensity,
            };
            match row.split {
                SplitName::Train => ds.train.push(obs),
                SplitName::Validation => ds.validation.push(obs),
                SplitName::Test => ds.test.push(obs),
            }
        }
        Ok(ds)
    }
}
