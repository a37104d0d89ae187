//! Evaluation metrics and percentile bootstrap intervals.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{iptw_weight, AteEstimate, EvalUnit};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    BiasIptw,
    BiasStrat,
    BiasMatch,
    BiasUnadjusted,
    TreatmentAccuracy,
    MseIptw,
    Spearman,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::BiasIptw => "bias_iptw",
            MetricName::BiasStrat => "bias_strat",
            MetricName::BiasMatch => "bias_match",
            MetricName::BiasUnadjusted => "bias_unadjusted",
            MetricName::TreatmentAccuracy => "treatment_accuracy",
            MetricName::MseIptw => "mse_iptw",
            MetricName::Spearman => "spearman",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
}

impl MetricValue {
    /// Attaches a bootstrap interval, widened if needed so that it contains
    /// the point estimate.
    pub fn with_bootstrap(self, boot: &BootstrapResult) -> MetricValue {
        let ci = Interval {
            lower: boot.interval.lower.min(self.value),
            upper: boot.interval.upper.max(self.value),
            level: boot.interval.level,
        };
        MetricValue { ci: Some(ci), ..self }
    }
}

pub fn bias(estimate: &AteEstimate, true_ate: f64) -> f64 {
    estimate.value - true_ate
}

/// Fraction of units whose thresholded score equals the received treatment.
pub fn treatment_accuracy(units: &[EvalUnit], threshold: f64) -> Result<f64> {
    if units.is_empty() {
        return Err(Error::Degenerate("accuracy of an empty set".into()));
    }
    let hits = units.iter().filter(|u| (u.score >= threshold) == u.treatment).count();
    Ok(hits as f64 / units.len() as f64)
}

fn true_propensity(u: &EvalUnit) -> Result<f64> {
    u.true_propensity
        .ok_or_else(|| Error::Parameter("metric needs true propensities".into()))
}

/// Squared distance between the normalized estimated and true IPTW weight
/// vectors, summed over units.
pub fn mse_iptw(units: &[EvalUnit]) -> Result<f64> {
    if units.is_empty() {
        return Err(Error::Degenerate("mse_iptw of an empty set".into()));
    }
    let mut est = Vec::with_capacity(units.len());
    let mut truth = Vec::with_capacity(units.len());
    for u in units {
        est.push(iptw_weight(u));
        let p = true_propensity(u)?;
        truth.push(1.0 / if u.treatment { p } else { 1.0 - p });
    }
    let se: f64 = est.iter().sum();
    let st: f64 = truth.iter().sum();
    Ok(est.iter().zip(&truth).map(|(a, b)| (a / se - b / st).powi(2)).sum())
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("one side has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation between estimated and true propensities.
pub fn spearman(units: &[EvalUnit]) -> Result<f64> {
    if units.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} units", units.len())));
    }
    let est: Vec<f64> = units.iter().map(|u| u.score).collect();
    let truth = units.iter().map(true_propensity).collect::<Result<Vec<f64>>>()?;
    pearson(&average_ranks(&est), &average_ranks(&truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resamples < 2 {
            return Err(Error::Parameter(format!("need at least 2 resamples, got {}", self.resamples)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Parameter(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub interval: Interval,
    pub valid: usize,
    pub degenerate: usize,
}

/// Linear-interpolation quantile of sorted data (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::Degenerate(_) | Error::UndefinedCorrelation(_))
}

/// Percentile bootstrap over units resampled with replacement. Resample `b`
/// draws from its own substream of `spec.seed`, so the result does not depend
/// on scheduling. Resamples on which `statistic` is degenerate are skipped;
/// more than half skipped is an instability error.
pub fn bootstrap_ci<F>(units: &[EvalUnit], spec: &BootstrapSpec, statistic: F) -> Result<BootstrapResult>
where
    F: Fn(&[EvalUnit]) -> Result<f64> + Sync,
{
    spec.validate()?;
    if units.is_empty() {
        return Err(Error::Degenerate("bootstrap of an empty set".into()));
    }
    let n = units.len();
    let draws: Vec<Result<Option<f64>>> = (0..spec.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, &[b"bootstrap", &(b as u64).to_le_bytes()]);
            let sample: Vec<EvalUnit> = (0..n).map(|_| units[rng.random_range(0..n)]).collect();
            match statistic(&sample) {
                Ok(v) => Ok(Some(v)),
                Err(e) if is_degenerate(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(spec.resamples);
    for d in draws {
        if let Some(v) = d? {
            values.push(v);
        }
    }
    let degenerate = spec.resamples - values.len();
    if 2 * degenerate > spec.resamples || values.is_empty() {
        return Err(Error::Instability {
            degenerate,
            total: spec.resamples,
        });
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - spec.level) / 2.0;
    Ok(BootstrapResult {
        interval: Interval {
            lower: quantile_sorted(&values, alpha),
            upper: quantile_sorted(&values, 1.0 - alpha),
            level: spec.level,
        },
        valid: values.len(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{unadjusted_units, EstimatorKind};
    use rand::Rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(t: bool, y: bool, score: f64, p: f64) -> EvalUnit {
        EvalUnit {
            id_rank: 0,
            treatment: t,
            outcome: y,
            score,
            true_propensity: Some(p),
        }
    }

    #[test]
    fn bias_examples() {
        let e = |v| AteEstimate {
            estimator: EstimatorKind::Unadjusted,
            value: v,
            n_effective: 1,
            diagnostics: Default::default(),
        };
        assert_eq!(bias(&e(0.4), 0.4), 0.0);
        assert_relative_eq!(bias(&e(0.08), 0.4), -0.32, epsilon = 1e-12);
        assert_eq!(bias(&e(0.0), 0.0), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        let us = [unit(true, false, 0.9, 0.9), unit(false, false, 0.2, 0.1)];
        assert_eq!(treatment_accuracy(&us, 0.5).unwrap(), 1.0);
        let us = [unit(true, false, 0.5, 0.9), unit(false, false, 0.5, 0.1), unit(false, true, 0.5, 0.1)];
        assert_relative_eq!(treatment_accuracy(&us, 0.5).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn mse_examples() {
        // received-treatment propensities .9/.9 true, .5/.9 estimated
        let us = [unit(true, true, 0.5, 0.9), unit(true, true, 0.9, 0.9)];
        let v = mse_iptw(&us).unwrap();
        let a: f64 = 2.0 / (2.0 + 10.0 / 9.0);
        assert_relative_eq!(v, (a - 0.5).powi(2) + (1.0 - a - 0.5).powi(2), epsilon = 1e-12);
        assert_relative_eq!(v, 0.040816, epsilon = 1e-6);
        assert_eq!(mse_iptw(&[unit(false, true, 0.3, 0.8)]).unwrap(), 0.0);
    }

    #[test]
    fn spearman_examples() {
        let us: Vec<EvalUnit> = [(0.1, 0.1), (0.2, 0.3), (0.3, 0.2)]
            .iter()
            .map(|&(s, p)| unit(true, true, s, p))
            .collect();
        assert_relative_eq!(spearman(&us).unwrap(), 0.5, epsilon = 1e-12);
        let rev: Vec<EvalUnit> = [0.1, 0.4, 0.7].iter().map(|&p| unit(true, true, 1.0 - p, p)).collect();
        assert_eq!(spearman(&rev).unwrap(), -1.0);
        let flat: Vec<EvalUnit> = [0.1, 0.4].iter().map(|&p| unit(true, true, 0.5, p)).collect();
        assert!(matches!(spearman(&flat), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[0.9, 0.1, 0.9, 0.5]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.1), 1.4);
    }

    fn sample_units(n: usize, seed: u64) -> Vec<EvalUnit> {
        let mut rng = substream(seed, &[b"units"]);
        (0..n)
            .map(|_| {
                let p = if rng.random_bool(0.5) { 0.9 } else { 0.1 };
                let t = rng.random_bool(p);
                let y = rng.random_bool(if t { 0.7 } else { 0.3 });
                unit(t, y, p, p)
            })
            .collect()
    }

    #[test]
    fn bootstrap_constant_statistic_is_zero_width() {
        let r = bootstrap_ci(&sample_units(50, 1), &BootstrapSpec::default(), |_| Ok(0.25)).unwrap();
        assert_eq!((r.interval.lower, r.interval.upper), (0.25, 0.25));
        assert_eq!(r.degenerate, 0);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let us = sample_units(200, 2);
        let spec = BootstrapSpec {
            resamples: 200,
            ..Default::default()
        };
        let a = bootstrap_ci(&us, &spec, |s| Ok(unadjusted_units(s)?.value)).unwrap();
        let b = bootstrap_ci(&us, &spec, |s| Ok(unadjusted_units(s)?.value)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_counts_degenerate_and_fails_when_unstable() {
        // 2 units, one per arm: a resample has both arms with probability 1/2.
        let us = [unit(true, true, 0.5, 0.5), unit(false, false, 0.5, 0.5)];
        let spec = BootstrapSpec {
            resamples: 400,
            ..Default::default()
        };
        match bootstrap_ci(&us, &spec, |s| Ok(unadjusted_units(s)?.value)) {
            Ok(r) => assert!(r.degenerate > 100 && r.degenerate <= 200),
            Err(Error::Instability { degenerate, total }) => assert!(2 * degenerate > total),
            Err(e) => panic!("{e}"),
        }
        let one_arm = [unit(true, true, 0.5, 0.5), unit(true, false, 0.5, 0.5)];
        assert!(matches!(
            bootstrap_ci(&one_arm, &spec, |s| Ok(unadjusted_units(s)?.value)),
            Err(Error::Instability { degenerate: 400, total: 400 })
        ));
    }

    #[test]
    fn bootstrap_width_shrinks_with_n() {
        let spec = |seed| BootstrapSpec {
            resamples: 200,
            level: 0.95,
            seed,
        };
        let stat = |s: &[EvalUnit]| Ok(unadjusted_units(s)?.value);
        for seed in 0..10 {
            let small = bootstrap_ci(&sample_units(400, seed), &spec(seed), stat).unwrap();
            let large = bootstrap_ci(&sample_units(4000, seed), &spec(seed), stat).unwrap();
            assert!(large.interval.width() < small.interval.width(), "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn spearman_is_rank_invariant(ps in prop::collection::vec(0.01f64..0.99, 3..40), scale in 0.1f64..5.0) {
            let us: Vec<EvalUnit> = ps.iter().enumerate()
                .map(|(i, &p)| unit(true, true, ((i * 37 % 11) as f64 + 1.0) / 20.0, p)).collect();
            let transformed: Vec<EvalUnit> = us.iter()
                .map(|u| EvalUnit { score: (u.score * scale).exp() / 1e3, ..*u }).collect();
            match (spearman(&us), spearman(&transformed)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn mse_non_negative_and_zero_at_truth(ps in prop::collection::vec((0.01f64..0.99, any::<bool>(), 0.01f64..0.99), 1..40)) {
            let us: Vec<EvalUnit> = ps.iter().map(|&(p, t, s)| unit(t, true, s, p)).collect();
            prop_assert!(mse_iptw(&us).unwrap() >= 0.0);
            let exact: Vec<EvalUnit> = us.iter().map(|u| EvalUnit { score: u.true_propensity.unwrap(), ..*u }).collect();
            prop_assert_eq!(mse_iptw(&exact).unwrap(), 0.0);
        }

        #[test]
        fn accuracy_in_unit_interval(ps in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..40), thr in 0.0f64..1.0) {
            let us: Vec<EvalUnit> = ps.iter().map(|&(s, t)| unit(t, true, s, 0.5)).collect();
            let a = treatment_accuracy(&us, thr).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
