//! Synthetic reference data: a seeded stand-in for a historical lead dataset
//! with latent segments, a historical (mostly rule-based) allocation, binary
//! outcomes and channel/outcome-dependent delays.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Action, FhatBucket};
use crate::error::{Error, Result};
use crate::preprocess::{FeatureKind, FeatureSpec, FeatureValue, HistoricalOutcome, RawLeadFeatures, Schema};
use crate::rng::{stream, SimRng, Stream};
use crate::world::ReferencePool;

/// Delay distribution for one (channel, outcome) pair: gamma with the given
/// mean (days) and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayShape {
    pub mean: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub pool_size: usize,
    pub seed: u64,
    /// Latent account segments driving features and conversion.
    pub segments: usize,
    /// Standard deviation of segment centres, in units of within-segment noise.
    pub segment_separation: f64,
    /// Probability that a categorical takes the segment's preferred token.
    pub token_affinity: f64,
    pub missing_rate: f64,
    /// Share of historical allocations that followed the f̂ rule; the rest were uniform.
    pub historical_rule_fraction: f64,
    pub base_rate_a: f64,
    pub base_rate_b: f64,
    pub base_rate_c: f64,
    /// Log-scale spread of per-segment channel effects.
    pub segment_spread: f64,
    /// Log-odds slope of conversion in standardized log f̂ (negative for A, positive for B).
    pub fhat_effect: f64,
    pub fhat_median: f64,
    /// Within-segment standard deviation of log f̂.
    pub fhat_sigma: f64,
    /// Standard deviation of per-segment log f̂ shifts.
    pub fhat_segment_spread: f64,
    pub max_delay_days: u32,
    pub delay_a_converted: DelayShape,
    pub delay_a_unconverted: DelayShape,
    pub delay_b_converted: DelayShape,
    pub delay_b_unconverted: DelayShape,
    pub delay_c_converted: DelayShape,
    pub delay_c_unconverted: DelayShape,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            pool_size: 20_000,
            seed: 2020,
            segments: 10,
            segment_separation: 3.0,
            token_affinity: 0.8,
            missing_rate: 0.05,
            historical_rule_fraction: 0.8,
            base_rate_a: 0.05,
            base_rate_b: 0.09,
            base_rate_c: 0.07,
            segment_spread: 0.6,
            fhat_effect: 1.6,
            fhat_median: 14.0,
            fhat_sigma: 0.15,
            fhat_segment_spread: 0.8,
            max_delay_days: 540,
            delay_a_converted: DelayShape { mean: 20.0, shape: 2.0 },
            delay_a_unconverted: DelayShape { mean: 15.0, shape: 1.0 },
            delay_b_converted: DelayShape { mean: 120.0, shape: 2.0 },
            delay_b_unconverted: DelayShape { mean: 200.0, shape: 1.0 },
            delay_c_converted: DelayShape { mean: 60.0, shape: 2.0 },
            delay_c_unconverted: DelayShape { mean: 90.0, shape: 1.0 },
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size < 1 {
            return Err(Error::config("pool_size must be at least 1"));
        }
        if self.segments < 1 {
            return Err(Error::config("segments must be at least 1"));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("missing_rate", self.missing_rate)?;
        unit("token_affinity", self.token_affinity)?;
        unit("historical_rule_fraction", self.historical_rule_fraction)?;
        unit("base_rate_a", self.base_rate_a)?;
        unit("base_rate_b", self.base_rate_b)?;
        unit("base_rate_c", self.base_rate_c)?;
        if !(self.fhat_median > 0.0 && self.fhat_sigma >= 0.0 && self.segment_spread >= 0.0 && self.segment_separation >= 0.0 && self.fhat_segment_spread >= 0.0) {
            return Err(Error::config("fhat_median must be > 0; spreads must be >= 0"));
        }
        for (name, s) in self.delay_shapes() {
            if !(s.mean > 0.0 && s.shape > 0.0 && s.mean.is_finite() && s.shape.is_finite()) {
                return Err(Error::config(format!("{name}: mean and shape must be positive")));
            }
        }
        Ok(())
    }

    fn delay_shapes(&self) -> [(&'static str, DelayShape); 6] {
        [
            ("delay_a_unconverted", self.delay_a_unconverted),
            ("delay_a_converted", self.delay_a_converted),
            ("delay_b_unconverted", self.delay_b_unconverted),
            ("delay_b_converted", self.delay_b_converted),
            ("delay_c_unconverted", self.delay_c_unconverted),
            ("delay_c_converted", self.delay_c_converted),
        ]
    }

    fn delay_shape(&self, action: Action, reward: u8) -> DelayShape {
        self.delay_shapes()[action.index() * 2 + usize::from(reward)].1
    }

    fn base_rate(&self, action: Action) -> f64 {
        match action {
            Action::A => self.base_rate_a,
            Action::B => self.base_rate_b,
            Action::C => self.base_rate_c,
        }
    }
}

struct RealColumn {
    name: &'static str,
    loc: f64,
    scale: f64,
    log: bool,
    can_be_missing: bool,
}

const REAL_COLUMNS: [RealColumn; 9] = [
    RealColumn { name: "employee_count", loc: 4.0, scale: 1.2, log: true, can_be_missing: false },
    RealColumn { name: "annual_revenue_musd", loc: 1.5, scale: 1.0, log: true, can_be_missing: true },
    RealColumn { name: "web_visits_30d", loc: 12.0, scale: 6.0, log: false, can_be_missing: true },
    RealColumn { name: "email_opens_30d", loc: 5.0, scale: 3.0, log: false, can_be_missing: false },
    RealColumn { name: "tenure_months", loc: 30.0, scale: 15.0, log: false, can_be_missing: true },
    RealColumn { name: "prior_seats", loc: 1.0, scale: 0.8, log: true, can_be_missing: false },
    RealColumn { name: "engagement_score", loc: 50.0, scale: 15.0, log: false, can_be_missing: false },
    RealColumn { name: "account_age_years", loc: 8.0, scale: 4.0, log: false, can_be_missing: false },
    RealColumn { name: "inmail_replies", loc: 2.0, scale: 1.5, log: false, can_be_missing: false },
];

const CATEGORICAL_COLUMNS: [(&str, &[&str]); 3] = [
    ("industry", &["finance", "healthcare", "manufacturing", "retail", "software"]),
    ("region", &["amer", "apac", "emea"]),
    ("company_tier", &["enterprise", "mid", "smb"]),
];

pub const FHAT_NAME: &str = "fhat_score";

/// The 13-feature schema produced by the generator.
pub fn generator_schema() -> Schema {
    let mut features = vec![FeatureSpec {
        name: FHAT_NAME.into(),
        kind: FeatureKind::Real,
        is_fhat: true,
    }];
    features.extend(REAL_COLUMNS.iter().map(|c| FeatureSpec {
        name: c.name.into(),
        kind: FeatureKind::Real,
        is_fhat: false,
    }));
    features.extend(CATEGORICAL_COLUMNS.iter().map(|(n, _)| FeatureSpec {
        name: (*n).into(),
        kind: FeatureKind::Categorical,
        is_fhat: false,
    }));
    Schema::new_dataset_schema(features).expect("built-in schema is valid")
}

struct Segment {
    real_means: Vec<f64>,
    fhat_shift: f64,
    preferred_tokens: Vec<usize>,
    channel_effect: [f64; 3],
}

fn normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

pub fn generate_reference_dataset(config: &GeneratorConfig) -> Result<ReferencePool> {
    config.validate()?;
    let mut rng = stream(config.seed, Stream::Generator);

    let segments: Vec<Segment> = (0..config.segments)
        .map(|_| Segment {
            real_means: (0..REAL_COLUMNS.len()).map(|_| config.segment_separation * normal(&mut rng)).collect(),
            fhat_shift: config.fhat_segment_spread * normal(&mut rng),
            preferred_tokens: CATEGORICAL_COLUMNS
                .iter()
                .map(|(_, vocab)| rng.gen_range(0..vocab.len()))
                .collect(),
            channel_effect: [
                config.segment_spread * normal(&mut rng),
                config.segment_spread * normal(&mut rng),
                config.segment_spread * normal(&mut rng),
            ],
        })
        .collect();

    let gammas: Vec<Gamma<f64>> = Action::ALL
        .iter()
        .flat_map(|&a| (0..=1u8).map(move |r| (a, r)))
        .map(|(a, r)| {
            let s = config.delay_shape(a, r);
            Gamma::new(s.shape, s.mean / s.shape).map_err(|e| Error::config(format!("delay shape: {e}")))
        })
        .collect::<Result<_>>()?;

    let log_median = config.fhat_median.ln();
    let fhat_total_sd = config.fhat_sigma.hypot(config.fhat_segment_spread);
    let mut leads = Vec::with_capacity(config.pool_size);
    let mut history = Vec::with_capacity(config.pool_size);
    for _ in 0..config.pool_size {
        let seg = &segments[rng.gen_range(0..segments.len())];
        let mut values = Vec::with_capacity(13);

        let z_fhat = seg.fhat_shift + config.fhat_sigma * normal(&mut rng);
        let fhat = round_to((log_median + z_fhat).exp(), 3);
        values.push(FeatureValue::Real(Some(fhat)));

        for (col, mu) in REAL_COLUMNS.iter().zip(&seg.real_means) {
            let z = mu + normal(&mut rng);
            let missing = col.can_be_missing && rng.gen::<f64>() < config.missing_rate;
            let v = if col.log {
                (col.loc + col.scale * z).exp()
            } else {
                col.loc + col.scale * z
            };
            values.push(FeatureValue::Real(if missing { None } else { Some(round_to(v, 3)) }));
        }

        for ((_, vocab), &pref) in CATEGORICAL_COLUMNS.iter().zip(&seg.preferred_tokens) {
            let tok = if rng.gen::<f64>() < config.token_affinity {
                pref
            } else {
                rng.gen_range(0..vocab.len())
            };
            values.push(FeatureValue::Categorical(vocab[tok].to_string()));
        }

        let action = if rng.gen::<f64>() < config.historical_rule_fraction {
            FhatBucket::of(fhat).rule_action()
        } else {
            Action::ALL[rng.gen_range(0..Action::COUNT)]
        };
        let slope = match action {
            Action::A => -config.fhat_effect,
            Action::B => config.fhat_effect,
            Action::C => 0.0,
        };
        let zf = if fhat_total_sd > 0.0 { z_fhat / fhat_total_sd } else { 0.0 };
        let p = sigmoid(logit(config.base_rate(action)) + seg.channel_effect[action.index()] + slope * zf);
        let reward = u8::from(rng.gen::<f64>() < p);
        let raw_delay = gammas[action.index() * 2 + usize::from(reward)].sample(&mut rng);
        let delay_days = (raw_delay.floor() as u32).min(config.max_delay_days);

        leads.push(Arc::new(RawLeadFeatures::new(values)));
        history.push(Some(HistoricalOutcome {
            action,
            reward,
            delay_days,
        }));
    }

    Ok(ReferencePool {
        schema: generator_schema(),
        leads,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = GeneratorConfig {
            pool_size: 1000,
            seed: 42,
            ..GeneratorConfig::default()
        };
        let a = generate_reference_dataset(&cfg).unwrap();
        let b = generate_reference_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert!(a.history.iter().flatten().all(|h| h.reward <= 1));
        for raw in &a.leads {
            raw.check(&a.schema).unwrap();
        }
    }

    #[test]
    fn empty_pool_rejected() {
        let cfg = GeneratorConfig {
            pool_size: 0,
            ..GeneratorConfig::default()
        };
        assert!(generate_reference_dataset(&cfg).is_err());
    }

    #[test]
    fn conversion_delay_ordering() {
        let pool = generate_reference_dataset(&GeneratorConfig::default()).unwrap();
        let mean = |a: Action| {
            let v: Vec<f64> = pool
                .history
                .iter()
                .flatten()
                .filter(|h| h.action == a && h.reward == 1)
                .map(|h| f64::from(h.delay_days))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, b, c) = (mean(Action::A), mean(Action::B), mean(Action::C));
        assert!(a < c && c < b, "A={a} C={c} B={b}");
    }
}
