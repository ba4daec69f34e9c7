//! Decision threshold selection on validation scores.

use serde::{Deserialize, Serialize};

use super::ScoreSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    #[default]
    MaxF1,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPolicy {
    #[serde(default)]
    pub method: ThresholdMethod,
    /// Quantile used by the quantile method and as the fallback when the
    /// validation labels have no positives.
    #[serde(default = "default_quantile")]
    pub quantile: f64,
}

fn default_quantile() -> f64 {
    0.99
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            method: ThresholdMethod::MaxF1,
            quantile: default_quantile(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    #[serde(with = "crate::float_serde")]
    pub threshold: f64,
    pub method: ThresholdMethod,
    pub fallback: bool,
    #[serde(with = "crate::float_serde")]
    pub validation_f1: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Max-F1 threshold and its F1 over the candidates `{+inf, midpoints of
/// consecutive unique scores, -inf}`. Ties go to the higher threshold.
pub fn max_f1_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Empty("no validation scores".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN validation score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let positives = labels.iter().filter(|&&l| l).count();

    let (mut tp, mut fp) = (0, 0);
    let mut best = (f64::INFINITY, f1(0, 0, positives));
    let mut i = 0;
    while i < order.len() {
        let u = scores[order[i]];
        while i < order.len() && scores[order[i]] == u {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let t = match order.get(i) {
            Some(&j) => midpoint(scores[j], u),
            None => f64::NEG_INFINITY,
        };
        let f = f1(tp, fp, positives - tp);
        if f > best.1 {
            best = (t, f);
        }
    }
    Ok(best)
}

/// A value `t` with `lo <= t < hi`, as close to the middle as rounding allows.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Calibrate on validation scores and fix the result into the series.
pub fn calibrate_threshold(series: &mut ScoreSeries, labels: &[bool]) -> Result<f64> {
    let (t, _) = max_f1_threshold(series.scores(), labels)?;
    series.set_threshold(t)?;
    Ok(t)
}

/// Linearly interpolated `q`-quantile.
pub fn quantile_threshold(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("no validation scores".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

/// Apply a policy: max-F1 when validation has positives (or quantile if
/// requested), otherwise the quantile fallback.
pub fn select_threshold(scores: &[f64], labels: &[bool], policy: &ThresholdPolicy) -> Result<ThresholdSelection> {
    let has_positive = labels.iter().any(|&l| l);
    let (threshold, method, fallback) = match policy.method {
        ThresholdMethod::MaxF1 if has_positive => (max_f1_threshold(scores, labels)?.0, ThresholdMethod::MaxF1, false),
        ThresholdMethod::MaxF1 => (
            quantile_threshold(scores, policy.quantile)?,
            ThresholdMethod::Quantile,
            true,
        ),
        ThresholdMethod::Quantile => (
            quantile_threshold(scores, policy.quantile)?,
            ThresholdMethod::Quantile,
            false,
        ),
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(ThresholdSelection {
        threshold,
        method,
        fallback,
        validation_f1: f1(tp, fp, fn_),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{decide, Aggregation};
    use crate::metrics::{confusion, f1 as metric_f1};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(scores: &[f64], labels: &[bool]) -> f64 {
        let mut u = scores.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
        cands.extend(u.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands
            .iter()
            .map(|&t| metric_f1(&confusion(labels, &decide(scores, t)).unwrap()).value)
            .fold(0.0, f64::max)
    }

    #[test]
    fn perfect_separation() {
        let (t, f) = max_f1_threshold(&[1.0, 2.0, 3.0, 4.0], &[false, false, true, true]).unwrap();
        assert_eq!(t, 2.5);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn all_negative_gives_infinity() {
        let mut s = ScoreSeries::new(vec![0, 1, 2], vec![0.1, 0.5, 0.2], Aggregation::MaxOverTime).unwrap();
        assert_eq!(calibrate_threshold(&mut s, &[false; 3]).unwrap(), f64::INFINITY);
        assert_eq!(s.decisions().unwrap(), vec![false; 3]);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(max_f1_threshold(&[], &[]).is_err());
    }

    #[test]
    fn ties_go_to_the_higher_threshold() {
        // 3.5 and -inf both give F1 = 2/3
        let scores = [1.0, 2.0, 3.0, 4.0];
        let labels = [true, false, false, true];
        let at = |t| metric_f1(&confusion(&labels, &decide(&scores, t)).unwrap()).value;
        assert_eq!(at(3.5), at(f64::NEG_INFINITY));
        let (t, _) = max_f1_threshold(&scores, &labels).unwrap();
        assert_eq!(t, 3.5);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let scores: Vec<f64> = (0..200)
                .map(|_| (rng.random_range(0.0..50.0f64)).round() / 5.0)
                .collect();
            let labels: Vec<bool> = (0..200).map(|_| rng.random_bool(0.3)).collect();
            let (t, f) = max_f1_threshold(&scores, &labels).unwrap();
            let got = metric_f1(&confusion(&labels, &decide(&scores, t)).unwrap()).value;
            assert_eq!(got, f);
            assert_eq!(f, brute_force(&scores, &labels));
        }
    }

    #[test]
    fn adjacent_floats_still_separate() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let (t, f) = max_f1_threshold(&[a, b], &[false, true]).unwrap();
        assert_eq!(f, 1.0);
        assert!(a <= t && t < b);
    }

    #[test]
    fn quantile() {
        let s: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile_threshold(&s, 0.99).unwrap(), 99.0);
        assert_eq!(quantile_threshold(&[1.0, 3.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn fallback_to_quantile() {
        let s: Vec<f64> = (0..=100).map(f64::from).collect();
        let sel = select_threshold(&s, &[false; 101], &ThresholdPolicy::default()).unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.method, ThresholdMethod::Quantile);
        assert_eq!(sel.threshold, 99.0);
    }

    proptest! {
        #[test]
        fn raising_threshold_is_monotone(
            scores in prop::collection::vec(-10.0f64..10.0, 1..60),
            seed in any::<u64>(),
            t1 in -12.0f64..12.0,
            dt in 0.0f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
            let lo = confusion(&labels, &decide(&scores, t1)).unwrap();
            let hi = confusion(&labels, &decide(&scores, t1 + dt)).unwrap();
            prop_assert!(hi.fp <= lo.fp);
            prop_assert!(hi.fn_ >= lo.fn_);
        }
    }
}
