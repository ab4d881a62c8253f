//! Lift and confidence-interval arithmetic.
//!
//! Inputs are sorted before any reduction, so every statistic here is
//! exactly invariant to the order in which runs finished.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// mean ± 1.96·s/√n
    #[default]
    Normal,
    /// Percentile bootstrap over runs.
    Bootstrap,
}

impl CiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CiMethod::Normal => "normal",
            CiMethod::Bootstrap => "bootstrap",
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CiMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(CiMethod::Normal),
            "bootstrap" => Ok(CiMethod::Bootstrap),
            other => Err(Error::config(format!("unknown ci_method `{other}`"))),
        }
    }
}

/// Whether lifts are paired within a run or computed from independent means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Paired,
    Independent,
}

impl Pairing {
    pub fn as_str(self) -> &'static str {
        match self {
            Pairing::Paired => "paired",
            Pairing::Independent => "independent",
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pairing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired" => Ok(Pairing::Paired),
            "independent" => Ok(Pairing::Independent),
            other => Err(Error::config(format!("unknown pairing `{other}`"))),
        }
    }
}

/// A point estimate with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval {
        mean: 0.0,
        low: 0.0,
        high: 0.0,
    };

    fn point(x: f64) -> Interval {
        Interval {
            mean: x,
            low: x,
            high: x,
        }
    }
}

/// `100·(r − base)/base`, or `None` when the baseline earned nothing.
pub fn lift_percent(r: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (r - base) / base)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean_sorted(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let v = sorted(xs);
    let n = v.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = mean_sorted(&v);
    if n < 2 {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, ss / (n - 1) as f64)
}

/// Normal-approximation interval `mean ± 1.96·s/√n`. With fewer than two
/// values the interval collapses onto the mean (zero when empty).
pub fn normal_ci(xs: &[f64]) -> Interval {
    let n = xs.len();
    let (m, var) = mean_var(xs);
    if n < 2 {
        return Interval::point(m);
    }
    let half = Z_95 * (var / n as f64).sqrt();
    Interval {
        mean: m,
        low: m - half,
        high: m + half,
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn percentile_interval(mean: f64, mut stats: Vec<f64>) -> Interval {
    stats.sort_by(f64::total_cmp);
    Interval {
        mean,
        low: quantile(&stats, 0.025).min(mean),
        high: quantile(&stats, 0.975).max(mean),
    }
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, rng: &mut SimRng) -> Interval {
    let v = sorted(xs);
    let n = v.len();
    if n < 2 || resamples == 0 {
        return normal_ci(&v);
    }
    let m = mean_sorted(&v);
    let stats: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| v[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    percentile_interval(m, stats)
}

/// Paired per-run lifts; runs with a zero baseline are dropped.
/// Returns the lifts and the drop count.
pub fn paired_lifts(rewards: &[f64], baseline: &[f64]) -> (Vec<f64>, usize) {
    let mut lifts = Vec::with_capacity(rewards.len());
    let mut dropped = 0;
    for (&r, &b) in rewards.iter().zip(baseline) {
        match lift_percent(r, b) {
            Some(l) => lifts.push(l),
            None => dropped += 1,
        }
    }
    (lifts, dropped)
}

/// Lift of the mean reward over the mean baseline reward, treating the two
/// samples as independent. The normal interval uses the delta method on
/// the ratio of means.
pub fn independent_lift(
    rewards: &[f64],
    baseline: &[f64],
    method: CiMethod,
    resamples: usize,
    rng: &mut SimRng,
) -> Option<Interval> {
    let n = rewards.len().min(baseline.len());
    if n == 0 {
        return None;
    }
    let (mr, vr) = mean_var(rewards);
    let (mb, vb) = mean_var(baseline);
    if mb == 0.0 {
        return None;
    }
    let ratio = mr / mb;
    let mean = 100.0 * (ratio - 1.0);
    if n < 2 {
        return Some(Interval::point(mean));
    }
    match method {
        CiMethod::Normal => {
            let var_ratio = vr / (rewards.len() as f64 * mb * mb)
                + mr * mr * vb / (baseline.len() as f64 * mb.powi(4));
            let half = 100.0 * Z_95 * var_ratio.sqrt();
            Some(Interval {
                mean,
                low: mean - half,
                high: mean + half,
            })
        }
        CiMethod::Bootstrap => {
            let r = sorted(rewards);
            let b = sorted(baseline);
            let stats: Vec<f64> = (0..resamples.max(1))
                .filter_map(|_| {
                    let sr: f64 = (0..r.len()).map(|_| r[rng.gen_range(0..r.len())]).sum::<f64>() / r.len() as f64;
                    let sb: f64 = (0..b.len()).map(|_| b[rng.gen_range(0..b.len())]).sum::<f64>() / b.len() as f64;
                    lift_percent(sr, sb)
                })
                .collect();
            if stats.is_empty() {
                return Some(Interval::point(mean));
            }
            Some(percentile_interval(mean, stats))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_relative_eq;

    #[test]
    fn lift_arithmetic() {
        assert_eq!(lift_percent(120.0, 100.0), Some(20.0));
        assert_eq!(lift_percent(5.0, 0.0), None);
    }

    #[test]
    fn constant_lifts_give_degenerate_interval() {
        let ci = normal_ci(&[3.5; 10]);
        assert_eq!((ci.mean, ci.low, ci.high), (3.5, 3.5, 3.5));
    }

    #[test]
    fn normal_ci_matches_formula() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ci = normal_ci(&xs);
        // s^2 = 5/3
        let half = 1.96 * (5.0f64 / 3.0 / 4.0).sqrt();
        assert_relative_eq!(ci.low, 2.5 - half, epsilon = 1e-12);
        assert_relative_eq!(ci.high, 2.5 + half, epsilon = 1e-12);
    }

    #[test]
    fn permutation_invariant() {
        let a = [0.3, -1.7, 2.25, 9.0, 1e-9, 4.4];
        let mut b = a;
        b.reverse();
        b.swap(0, 3);
        assert_eq!(normal_ci(&a), normal_ci(&b));
        let ba = bootstrap_ci(&a, 500, &mut stream(1, Stream::Bootstrap));
        let bb = bootstrap_ci(&b, 500, &mut stream(1, Stream::Bootstrap));
        assert_eq!(ba, bb);
    }

    #[test]
    fn zero_baseline_runs_dropped() {
        let (l, d) = paired_lifts(&[10.0, 3.0, 12.0], &[8.0, 0.0, 10.0]);
        assert_eq!(d, 1);
        assert_eq!(l, vec![25.0, 20.0]);
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let ci = bootstrap_ci(&xs, 1000, &mut stream(3, Stream::Bootstrap));
        assert!(ci.low <= ci.mean && ci.mean <= ci.high);
        let n = normal_ci(&xs);
        assert!((ci.high - ci.low) / (n.high - n.low) > 0.7);
    }

    #[test]
    fn independent_mode_point_estimate() {
        let mut rng = stream(4, Stream::Bootstrap);
        let ci = independent_lift(&[110.0, 130.0], &[100.0, 100.0], CiMethod::Normal, 0, &mut rng).unwrap();
        assert_relative_eq!(ci.mean, 20.0, epsilon = 1e-12);
        assert!(ci.low < 20.0 && ci.high > 20.0);
        assert!(independent_lift(&[1.0], &[0.0], CiMethod::Normal, 0, &mut rng).is_none());
    }
}
