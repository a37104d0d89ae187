//! ATE estimators over (observation, propensity score) pairs: the unadjusted
//! difference in means, IPTW, percentile stratification and nearest-neighbour
//! matching on the score.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::ScoreSet;
use crate::taskgen::Observation;

/// One unit as seen by the estimators. `id_rank` is the position of the
/// user id in sorted order and stands in for the id in tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalUnit {
    pub id_rank: u32,
    pub treatment: bool,
    pub outcome: bool,
    pub score: f64,
    pub true_propensity: Option<f64>,
}

/// Pairs observations with their scores; fails with a coverage error listing
/// every observation that has no score.
pub fn join(observations: &[Observation], scores: &ScoreSet) -> Result<Vec<EvalUnit>> {
    let mut order: Vec<usize> = (0..observations.len()).collect();
    order.sort_by(|&a, &b| observations[a].user_id.cmp(&observations[b].user_id));
    let mut rank = vec![0u32; observations.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    let mut missing = Vec::new();
    let mut units = Vec::with_capacity(observations.len());
    for (i, o) in observations.iter().enumerate() {
        match scores.get(&o.user_id) {
            Some(score) => units.push(EvalUnit {
                id_rank: rank[i],
                treatment: o.treatment,
                outcome: o.outcome,
                score,
                true_propensity: Some(o.true_propensity),
            }),
            None => missing.push(o.user_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    Ok(units)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IptwVariant {
    /// Self-normalized weighted mean within each arm.
    #[default]
    PerArmHajek,
    /// Signed weighted outcomes over a single normalizer, the sum of all weights.
    SingleNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchTies {
    /// Average the outcomes of every equally distant opposite-arm unit.
    #[default]
    Average,
    /// Take the single equally distant unit with the lowest user id.
    LowestId,
}

pub const DEFAULT_STRATA: usize = 10;
pub const DEFAULT_CALIPER_MULT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorSpec {
    Unadjusted,
    Iptw {
        #[serde(default)]
        variant: IptwVariant,
    },
    Stratified {
        #[serde(default = "default_strata")]
        k: usize,
    },
    Matched {
        #[serde(default = "default_caliper")]
        caliper_mult: f64,
        #[serde(default)]
        ties: MatchTies,
    },
}

fn default_strata() -> usize {
    DEFAULT_STRATA
}

fn default_caliper() -> f64 {
    DEFAULT_CALIPER_MULT
}

impl EstimatorSpec {
    pub fn iptw() -> Self {
        EstimatorSpec::Iptw {
            variant: IptwVariant::PerArmHajek,
        }
    }

    pub fn stratified() -> Self {
        EstimatorSpec::Stratified { k: DEFAULT_STRATA }
    }

    pub fn matched() -> Self {
        EstimatorSpec::Matched {
            caliper_mult: DEFAULT_CALIPER_MULT,
            ties: MatchTies::Average,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EstimatorSpec::Unadjusted => "unadjusted".into(),
            EstimatorSpec::Iptw {
                variant: IptwVariant::PerArmHajek,
            } => "iptw".into(),
            EstimatorSpec::Iptw {
                variant: IptwVariant::SingleNormalizer,
            } => "iptw_single_normalizer".into(),
            EstimatorSpec::Stratified { k } => format!("strat{k}"),
            EstimatorSpec::Matched { caliper_mult, ties } => {
                let t = match ties {
                    MatchTies::Average => "",
                    MatchTies::LowestId => "_lowest_id",
                };
                format!("match{caliper_mult}{t}")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorSpec::Stratified { k: 0 } => Err(Error::Parameter("stratification needs k >= 1".into())),
            EstimatorSpec::Matched { caliper_mult, .. } if caliper_mult.is_nan() || caliper_mult < 0.0 => {
                Err(Error::Parameter(format!("caliper multiplier must be >= 0, got {caliper_mult}")))
            }
            _ => Ok(()),
        }
    }

    pub fn estimate(&self, units: &[EvalUnit]) -> Result<AteEstimate> {
        match *self {
            EstimatorSpec::Unadjusted => unadjusted_units(units),
            EstimatorSpec::Iptw { variant } => iptw_units(units, variant),
            EstimatorSpec::Stratified { k } => strat_units(units, k),
            EstimatorSpec::Matched { caliper_mult, ties } => match_units(units, caliper_mult, ties),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Unadjusted,
    IptwHajekPerArm,
    IptwSingleNormalizer,
    Stratified,
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub k_index: usize,
    pub n_k: usize,
    /// `None` when the stratum misses an arm and was dropped.
    pub ate_k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_strata: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strata: Vec<StratumSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmatched_treated: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmatched_control: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caliper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimator: EstimatorKind,
    pub value: f64,
    pub n_effective: usize,
    pub diagnostics: Diagnostics,
}

impl AteEstimate {
    fn plain(estimator: EstimatorKind, value: f64, n: usize) -> Self {
        AteEstimate {
            estimator,
            value,
            n_effective: n,
            diagnostics: Diagnostics::default(),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct ArmSums {
    n1: usize,
    y1: usize,
    n0: usize,
    y0: usize,
}

impl ArmSums {
    fn add(&mut self, u: &EvalUnit) {
        if u.treatment {
            self.n1 += 1;
            self.y1 += u.outcome as usize;
        } else {
            self.n0 += 1;
            self.y0 += u.outcome as usize;
        }
    }

    fn diff(&self) -> Option<f64> {
        (self.n1 > 0 && self.n0 > 0).then(|| self.y1 as f64 / self.n1 as f64 - self.y0 as f64 / self.n0 as f64)
    }
}

fn degenerate_arm(units: &[EvalUnit]) -> Error {
    let treated = units.iter().filter(|u| u.treatment).count();
    Error::Degenerate(format!(
        "{treated} treated and {} untreated units; both arms must be nonempty",
        units.len() - treated
    ))
}

pub fn unadjusted_units(units: &[EvalUnit]) -> Result<AteEstimate> {
    let mut s = ArmSums::default();
    units.iter().for_each(|u| s.add(u));
    let value = s.diff().ok_or_else(|| degenerate_arm(units))?;
    Ok(AteEstimate::plain(EstimatorKind::Unadjusted, value, units.len()))
}

/// Difference of arm-wise outcome means.
pub fn unadjusted(observations: &[Observation]) -> Result<AteEstimate> {
    let units: Vec<EvalUnit> = observations
        .iter()
        .map(|o| EvalUnit {
            id_rank: 0,
            treatment: o.treatment,
            outcome: o.outcome,
            score: 0.5,
            true_propensity: None,
        })
        .collect();
    unadjusted_units(&units)
}

/// Inverse probability of the received treatment.
pub fn iptw_weight(u: &EvalUnit) -> f64 {
    1.0 / if u.treatment { u.score } else { 1.0 - u.score }
}

pub fn iptw_units(units: &[EvalUnit], variant: IptwVariant) -> Result<AteEstimate> {
    let (mut w1, mut wy1, mut w0, mut wy0) = (0.0, 0.0, 0.0, 0.0);
    let (mut wmin, mut wmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for u in units {
        let w = iptw_weight(u);
        wmin = wmin.min(w);
        wmax = wmax.max(w);
        let y = if u.outcome { w } else { 0.0 };
        if u.treatment {
            w1 += w;
            wy1 += y;
        } else {
            w0 += w;
            wy0 += y;
        }
    }
    if w1 == 0.0 || w0 == 0.0 {
        return Err(degenerate_arm(units));
    }
    let (estimator, value) = match variant {
        IptwVariant::PerArmHajek => (EstimatorKind::IptwHajekPerArm, wy1 / w1 - wy0 / w0),
        IptwVariant::SingleNormalizer => (EstimatorKind::IptwSingleNormalizer, (wy1 - wy0) / (w1 + w0)),
    };
    if !value.is_finite() {
        return Err(Error::Degenerate("non-finite IPTW estimate; are the scores clipped?".into()));
    }
    let mut est = AteEstimate::plain(estimator, value, units.len());
    est.diagnostics.weight_min = Some(wmin);
    est.diagnostics.weight_max = Some(wmax);
    Ok(est)
}

pub fn estimate_iptw(observations: &[Observation], scores: &ScoreSet, variant: IptwVariant) -> Result<AteEstimate> {
    iptw_units(&join(observations, scores)?, variant)
}

/// Stratum boundaries are the empirical `j/k` quantiles of the scores
/// (order statistic `ceil(j n / k)`); a unit belongs to the first stratum whose
/// upper boundary is at least its score, so boundary values fall into the
/// lower stratum and tied scores always share a stratum.
pub fn strat_units(units: &[EvalUnit], k: usize) -> Result<AteEstimate> {
    if k == 0 {
        return Err(Error::Parameter("stratification needs k >= 1".into()));
    }
    let n = units.len();
    if n == 0 {
        return Err(degenerate_arm(units));
    }
    let mut sorted: Vec<f64> = units.iter().map(|u| u.score).collect();
    sorted.sort_by(f64::total_cmp);
    let upper: Vec<f64> = (1..=k).map(|j| sorted[(j * n).div_ceil(k) - 1]).collect();
    let mut sums = vec![ArmSums::default(); k];
    for u in units {
        let j = upper.partition_point(|&b| b < u.score);
        sums[j].add(u);
    }
    let mut diagnostics = Diagnostics::default();
    let n_eff: usize = sums.iter().filter(|s| s.diff().is_some()).map(|s| s.n1 + s.n0).sum();
    let mut value = 0.0;
    for (j, s) in sums.iter().enumerate() {
        let n_k = s.n1 + s.n0;
        let ate_k = s.diff();
        match ate_k {
            // weights n_k / n_eff, so a single retained stratum reproduces its ATE exactly
            Some(a) => value += n_k as f64 / n_eff as f64 * a,
            None => diagnostics.dropped_strata.push(j),
        }
        diagnostics.strata.push(StratumSummary { k_index: j, n_k, ate_k });
    }
    if n_eff == 0 {
        return Err(Error::Degenerate(format!("all {k} strata lack a treatment arm")));
    }
    Ok(AteEstimate {
        estimator: EstimatorKind::Stratified,
        value,
        n_effective: n_eff,
        diagnostics,
    })
}

pub fn estimate_strat(observations: &[Observation], scores: &ScoreSet, k: usize) -> Result<AteEstimate> {
    strat_units(&join(observations, scores)?, k)
}

/// Units of one arm sharing a score.
struct ScoreGroup {
    score: f64,
    outcome_sum: f64,
    count: usize,
    lowest_rank: u32,
    lowest_outcome: bool,
}

fn score_groups(units: &[EvalUnit], arm: bool) -> Vec<ScoreGroup> {
    let mut arm_units: Vec<&EvalUnit> = units.iter().filter(|u| u.treatment == arm).collect();
    arm_units.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id_rank.cmp(&b.id_rank)));
    let mut groups: Vec<ScoreGroup> = Vec::new();
    for u in arm_units {
        match groups.last_mut() {
            Some(g) if g.score == u.score => {
                g.outcome_sum += u.outcome as u8 as f64;
                g.count += 1;
            }
            _ => groups.push(ScoreGroup {
                score: u.score,
                outcome_sum: u.outcome as u8 as f64,
                count: 1,
                lowest_rank: u.id_rank,
                lowest_outcome: u.outcome,
            }),
        }
    }
    groups
}

/// Matched counterfactual outcome for a unit with score `s`, or `None` when
/// the nearest opposite-arm score is farther than the caliper.
fn matched_outcome(groups: &[ScoreGroup], s: f64, caliper: f64, ties: MatchTies) -> Option<f64> {
    let pos = groups.partition_point(|g| g.score < s);
    let left = pos.checked_sub(1).map(|i| &groups[i]);
    let right = groups.get(pos);
    let dist = |g: &ScoreGroup| (g.score - s).abs();
    let best: Vec<&ScoreGroup> = match (left, right) {
        (Some(l), Some(r)) if dist(l) == dist(r) => vec![l, r],
        (Some(l), Some(r)) => vec![if dist(l) < dist(r) { l } else { r }],
        (Some(g), None) | (None, Some(g)) => vec![g],
        (None, None) => return None,
    };
    if dist(best[0]) > caliper {
        return None;
    }
    Some(match ties {
        MatchTies::Average => {
            let (y, c) = best.iter().fold((0.0, 0usize), |(y, c), g| (y + g.outcome_sum, c + g.count));
            y / c as f64
        }
        MatchTies::LowestId => {
            let g = best.iter().min_by_key(|g| g.lowest_rank).expect("nonempty");
            g.lowest_outcome as u8 as f64
        }
    })
}

fn population_sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let mean = sum / n as f64;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Every unit, treated or not, is matched with replacement to its nearest
/// opposite-arm neighbour on the score. Pairs farther apart than
/// `caliper_mult` standard deviations of the scores are discarded and the
/// estimate averages `(2T - 1)(Y_i - Y_j)` over the retained units.
pub fn match_units(units: &[EvalUnit], caliper_mult: f64, ties: MatchTies) -> Result<AteEstimate> {
    if caliper_mult.is_nan() || caliper_mult < 0.0 {
        return Err(Error::Parameter(format!("caliper multiplier must be >= 0, got {caliper_mult}")));
    }
    let treated = score_groups(units, true);
    let control = score_groups(units, false);
    if treated.is_empty() || control.is_empty() {
        return Err(degenerate_arm(units));
    }
    let caliper = caliper_mult * population_sd(units.iter().map(|u| u.score));
    let (mut total, mut m) = (0.0, 0usize);
    let (mut unmatched_t, mut unmatched_c) = (0usize, 0usize);
    for u in units {
        let opposite = if u.treatment { &control } else { &treated };
        match matched_outcome(opposite, u.score, caliper, ties) {
            Some(yj) => {
                let yi = u.outcome as u8 as f64;
                total += if u.treatment { yi - yj } else { yj - yi };
                m += 1;
            }
            None if u.treatment => unmatched_t += 1,
            None => unmatched_c += 1,
        }
    }
    if m == 0 {
        return Err(Error::Degenerate(format!("no unit has a match within caliper {caliper}")));
    }
    let mut est = AteEstimate::plain(EstimatorKind::Matched, total / m as f64, m);
    est.diagnostics.unmatched_treated = Some(unmatched_t);
    est.diagnostics.unmatched_control = Some(unmatched_c);
    est.diagnostics.caliper = Some(caliper);
    Ok(est)
}

pub fn estimate_match(observations: &[Observation], scores: &ScoreSet, caliper_mult: f64) -> Result<AteEstimate> {
    match_units(&join(observations, scores)?, caliper_mult, MatchTies::Average)
}
