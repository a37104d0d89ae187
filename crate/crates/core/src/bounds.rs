//! Theoretical bias bounds on the counterfactual arm means and the ATE
//! interval they imply, plus a comparison against empirical intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EvalUnit;
use crate::metrics::Interval;

/// Probability of the given treatment level under treated-probability `p`.
fn level_prob(p: f64, arm: bool) -> f64 {
    if arm {
        p
    } else {
        1.0 - p
    }
}

/// Mean over arm units of `Y / p_T * (p̂_T - p_T)^2 / p̂_T^2`, where `p_T` and
/// `p̂_T` are the true and estimated probabilities of treatment level `arm`.
pub fn arm_bias_bound(units: &[EvalUnit], arm: bool) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for u in units.iter().filter(|u| u.treatment == arm) {
        let p = level_prob(
            u.true_propensity
                .ok_or_else(|| Error::Parameter("bounds need true propensities".into()))?,
            arm,
        );
        let q = level_prob(u.score, arm);
        let y = u.outcome as u8 as f64;
        total += y / p * (q - p).powi(2) / (q * q);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Degenerate(format!("arm T={} is empty", arm as u8)));
    }
    Ok((total / n as f64).abs())
}

/// Widens each arm mean by its bound and subtracts.
pub fn ate_bound_interval(y_hat_t0: f64, y_hat_t1: f64, bound_t0: f64, bound_t1: f64) -> Result<(f64, f64)> {
    if !(bound_t0 >= 0.0 && bound_t1 >= 0.0) {
        return Err(Error::Parameter(format!("bounds must be non-negative, got {bound_t0}, {bound_t1}")));
    }
    let lower = (y_hat_t1 - bound_t1) - (y_hat_t0 + bound_t0);
    let upper = (y_hat_t1 + bound_t1) - (y_hat_t0 - bound_t0);
    Ok((lower, upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tightness {
    /// Empirical CI strictly narrower than the bound interval.
    pub empirical_tighter: bool,
    /// Unadjusted estimate strictly within half the bound width of the
    /// interval midpoint.
    pub unadjusted_within_bound: bool,
}

pub fn tightness_comparison(bound: (f64, f64), empirical: &Interval, unadjusted_value: f64) -> Tightness {
    let width = bound.1 - bound.0;
    let point = (bound.0 + bound.1) / 2.0;
    Tightness {
        empirical_tighter: empirical.width() < width,
        unadjusted_within_bound: (unadjusted_value - point).abs() < width / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub arm_bound_t0: f64,
    pub arm_bound_t1: f64,
    pub y_hat_t0: f64,
    pub y_hat_t1: f64,
    pub ate_interval: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness: Option<Tightness>,
}

impl BoundResult {
    pub fn tighter_than_empirical(&self) -> Option<bool> {
        self.tightness.map(|t| t.empirical_tighter)
    }
}

/// Per-arm Hajek means, the arm bounds, and the resulting ATE interval.
pub fn bound_result(units: &[EvalUnit]) -> Result<BoundResult> {
    let arm_mean = |arm: bool| {
        let (mut w, mut wy) = (0.0, 0.0);
        for u in units.iter().filter(|u| u.treatment == arm) {
            let wi = 1.0 / level_prob(u.score, arm);
            w += wi;
            if u.outcome {
                wy += wi;
            }
        }
        wy / w
    };
    let arm_bound_t0 = arm_bias_bound(units, false)?;
    let arm_bound_t1 = arm_bias_bound(units, true)?;
    let (y_hat_t0, y_hat_t1) = (arm_mean(false), arm_mean(true));
    let ate_interval = ate_bound_interval(y_hat_t0, y_hat_t1, arm_bound_t0, arm_bound_t1)?;
    Ok(BoundResult {
        arm_bound_t0,
        arm_bound_t1,
        y_hat_t0,
        y_hat_t1,
        ate_interval,
        tightness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn arm_bound_examples() {
        assert_relative_eq!(arm_bias_bound(&[unit(true, true, 0.8, 0.9)], true).unwrap(), 0.01 / 0.64 / 0.9, epsilon = 1e-12);
        assert_relative_eq!(arm_bias_bound(&[unit(true, true, 0.8, 0.9)], true).unwrap(), 0.017361, epsilon = 1e-6);
        // untreated arm uses 1 - p
        assert_relative_eq!(arm_bias_bound(&[unit(false, true, 0.2, 0.1)], false).unwrap(), 0.017361, epsilon = 1e-6);
        assert_eq!(arm_bias_bound(&[unit(true, true, 0.9, 0.9)], true).unwrap(), 0.0);
        assert_eq!(arm_bias_bound(&[unit(true, false, 0.2, 0.9)], true).unwrap(), 0.0);
        assert!(matches!(arm_bias_bound(&[unit(true, true, 0.2, 0.9)], false), Err(Error::Degenerate(_))));
    }

    #[test]
    fn interval_examples() {
        let (lo, hi) = ate_bound_interval(0.5, 0.9, 0.1, 0.1).unwrap();
        assert_relative_eq!(lo, 0.2, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.6, epsilon = 1e-12);
        assert_eq!(ate_bound_interval(0.3, 0.7, 0.0, 0.0).unwrap(), (0.7 - 0.3, 0.7 - 0.3));
        assert!(ate_bound_interval(0.3, 0.7, -0.1, 0.0).is_err());
    }

    #[test]
    fn tightness_is_strict() {
        let ci = |w: f64| Interval {
            lower: 0.0,
            upper: w,
            level: 0.95,
        };
        assert!(tightness_comparison((0.0, 0.4), &ci(0.05), 0.2).empirical_tighter);
        assert!(!tightness_comparison((0.0, 0.4), &ci(0.4), 0.2).empirical_tighter);
        let t = tightness_comparison((0.1, 0.3), &ci(0.1), 0.35);
        assert!(!t.unadjusted_within_bound);
    }

    proptest! {
        #[test]
        fn interval_properties(y0 in 0.0f64..1.0, y1 in 0.0f64..1.0, b0 in 0.0f64..2.0, b1 in 0.0f64..2.0) {
            let (lo, hi) = ate_bound_interval(y0, y1, b0, b1).unwrap();
            prop_assert!(lo <= y1 - y0 && y1 - y0 <= hi);
            prop_assert!((hi - lo - 2.0 * (b0 + b1)).abs() < 1e-9);
        }

        #[test]
        fn bound_monotone_in_brier(p in 0.05f64..0.95, d1 in 0.0f64..0.3, d2 in 0.0f64..0.3, others in prop::collection::vec((0.05f64..0.95, 0.05f64..0.95), 0..10)) {
            // Move the estimate of one treated unit away from the truth, downward.
            let (small, large) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let q1 = (p - small).max(0.01);
            let q2 = (p - large).max(0.01);
            let mut a = vec![unit(true, true, q1, p)];
            let mut b = vec![unit(true, true, q2, p)];
            for &(pp, qq) in &others {
                a.push(unit(true, true, qq, pp));
                b.push(unit(true, true, qq, pp));
            }
            prop_assert!(arm_bias_bound(&b, true).unwrap() >= arm_bias_bound(&a, true).unwrap() - 1e-12);
        }
    }
}
