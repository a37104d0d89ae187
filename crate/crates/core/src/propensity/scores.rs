use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskgen::{Observation, TaskDataset};

pub const DEFAULT_CLIP_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "label")]
pub enum ScoreSource {
    Model(String),
    ExternalFile(String),
}

/// Clipped propensity estimates keyed by user id; every score lies in
/// `[clip_epsilon, 1 - clip_epsilon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: BTreeMap<String, f64>,
    pub clip_epsilon: f64,
    pub source: ScoreSource,
}

impl ScoreSet {
    pub fn get(&self, user_id: &str) -> Option<f64> {
        self.scores.get(user_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Writes `user_id,score` rows in id order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_scores_csv(w, self.scores.iter().map(|(k, v)| (k.as_str(), *v)))
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("clip epsilon must lie in (0, 0.5), got {eps}")))
    }
}

pub fn clip(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Clamps every score into `[eps, 1 - eps]`. NaN scores are rejected.
pub fn clip_scores(raw: BTreeMap<String, f64>, eps: f64, source: ScoreSource) -> Result<ScoreSet> {
    check_epsilon(eps)?;
    let mut scores = raw;
    for (id, p) in scores.iter_mut() {
        if p.is_nan() {
            return Err(Error::ScoreValue {
                user_id: id.clone(),
                value: *p,
            });
        }
        *p = clip(*p, eps);
    }
    Ok(ScoreSet {
        scores,
        clip_epsilon: eps,
        source,
    })
}

/// True propensities of the given observations.
pub fn oracle_scores_for(observations: &[Observation], eps: f64) -> Result<ScoreSet> {
    let raw = observations.iter().map(|o| (o.user_id.clone(), o.true_propensity)).collect();
    clip_scores(raw, eps, ScoreSource::Model("oracle".into()))
}

/// Oracle scores for the test split.
pub fn oracle_scores(dataset: &TaskDataset) -> ScoreSet {
    oracle_scores_for(&dataset.test, DEFAULT_CLIP_EPSILON).expect("default epsilon is valid")
}

/// The same score for every unit.
pub fn constant_scores(observations: &[Observation], value: f64, eps: f64, label: &str) -> Result<ScoreSet> {
    let raw = observations.iter().map(|o| (o.user_id.clone(), value)).collect();
    clip_scores(raw, eps, ScoreSource::Model(label.into()))
}

pub fn write_scores_csv<'a, W: Write>(w: W, rows: impl IntoIterator<Item = (&'a str, f64)>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["user_id", "score"])?;
    for (id, s) in rows {
        out.write_record([id, &s.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ScoreRow {
    user_id: String,
    score: f64,
}

/// Parses a `user_id,score` CSV. Duplicate ids and values outside `[0, 1]`
/// are rejected.
pub fn read_scores_csv<R: Read>(r: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user_id", "score"] {
        return Err(Error::Parse {
            path: "<scores>".into(),
            line: 1,
            message: format!("expected header `user_id,score`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ScoreRow>().enumerate() {
        let row = row?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(Error::ScoreValue {
                user_id: row.user_id,
                value: row.score,
            });
        }
        if out.insert(row.user_id.clone(), row.score).is_some() {
            return Err(Error::Parse {
                path: "<scores>".into(),
                line: i + 2,
                message: format!("duplicate user_id {}", row.user_id),
            });
        }
    }
    Ok(out)
}

/// Loads plugin scores and checks that every test user is covered. Ids that
/// are not in the test split are ignored.
pub fn load_external_scores(path: impl AsRef<Path>, dataset: &TaskDataset, eps: f64) -> Result<ScoreSet> {
    let path = path.as_ref();
    let raw = read_scores_csv(std::fs::File::open(path)?).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })?;
    external_scores_from(raw, dataset, eps, &path.display().to_string())
}

pub fn external_scores_from(
    raw: BTreeMap<String, f64>,
    dataset: &TaskDataset,
    eps: f64,
    label: &str,
) -> Result<ScoreSet> {
    let test_ids: BTreeSet<&str> = dataset.test.iter().map(|o| o.user_id.as_str()).collect();
    let missing: Vec<String> = test_ids
        .iter()
        .filter(|id| !raw.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    let kept = raw.into_iter().filter(|(k, _)| test_ids.contains(k.as_str())).collect();
    clip_scores(kept, eps, ScoreSource::ExternalFile(label.into()))
}
