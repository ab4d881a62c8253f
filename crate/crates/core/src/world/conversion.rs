//! Ground-truth conversion probabilities per cluster and channel (and
//! optionally per f̂ bucket), and Bernoulli reward draws from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Action, FhatBucket, LeadRecord};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::world::kmeans::{assign_cluster, ClusterModel};
use crate::world::ReferencePool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKeying {
    ClusterAction,
    ClusterActionBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionTable {
    pub k: usize,
    pub keying: TableKeying,
    /// Row-major: cluster, then action, then bucket (when keyed by bucket).
    pub probs: Vec<f64>,
}

impl ConversionTable {
    fn expected_len(k: usize, keying: TableKeying) -> usize {
        match keying {
            TableKeying::ClusterAction => k * Action::COUNT,
            TableKeying::ClusterActionBucket => k * Action::COUNT * FhatBucket::ALL.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != Self::expected_len(self.k, self.keying) {
            return Err(Error::invalid("conversion table does not cover its key domain"));
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("conversion probability {p} is outside [0, 1]")));
        }
        Ok(())
    }

    fn index(&self, cluster: usize, action: Action, bucket: FhatBucket) -> Option<usize> {
        if cluster >= self.k {
            return None;
        }
        Some(match self.keying {
            TableKeying::ClusterAction => cluster * Action::COUNT + action.index(),
            TableKeying::ClusterActionBucket => {
                (cluster * Action::COUNT + action.index()) * FhatBucket::ALL.len() + bucket.index()
            }
        })
    }

    /// Bucket is ignored by tables keyed on (cluster, action) only.
    pub fn probability(&self, cluster: usize, action: Action, bucket: FhatBucket) -> Result<f64> {
        self.index(cluster, action, bucket)
            .and_then(|i| self.probs.get(i).copied())
            .ok_or_else(|| Error::MissingKey(format!("cluster {cluster}, action {action}, bucket {bucket:?}")))
    }

    pub fn set(&mut self, cluster: usize, action: Action, bucket: FhatBucket, p: f64) -> Result<()> {
        let i = self
            .index(cluster, action, bucket)
            .ok_or_else(|| Error::MissingKey(format!("cluster {cluster}")))?;
        self.probs[i] = p;
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.probs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    /// Iterate `(cluster, action, bucket, p)`; bucket is `None` for
    /// (cluster, action) tables.
    pub fn entries(&self) -> Vec<(usize, Action, Option<FhatBucket>, f64)> {
        let mut out = Vec::with_capacity(self.probs.len());
        for c in 0..self.k {
            for a in Action::ALL {
                match self.keying {
                    TableKeying::ClusterAction => {
                        out.push((c, a, None, self.probs[self.index(c, a, FhatBucket::Low).unwrap()]))
                    }
                    TableKeying::ClusterActionBucket => {
                        for b in FhatBucket::ALL {
                            out.push((c, a, Some(b), self.probs[self.index(c, a, b).unwrap()]));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Per-(cluster, action) maximum-likelihood conversion rates from the pool's
/// historical allocations. Unobserved cells take the pool's global rate.
pub fn build_historical_conversion(pool: &ReferencePool, clusters: &ClusterModel, contexts: &[crate::domain::ContextVector]) -> Result<ConversionTable> {
    if contexts.len() != pool.len() {
        return Err(Error::invalid("contexts must align with the reference pool"));
    }
    let k = clusters.k();
    let mut alloc = vec![0u64; k * Action::COUNT];
    let mut conv = vec![0u64; k * Action::COUNT];
    let mut total = 0u64;
    let mut total_conv = 0u64;
    for (ctx, hist) in contexts.iter().zip(&pool.history) {
        let Some(h) = hist else { continue };
        let c = assign_cluster(ctx, clusters)?;
        let i = c * Action::COUNT + h.action.index();
        alloc[i] += 1;
        conv[i] += u64::from(h.reward);
        total += 1;
        total_conv += u64::from(h.reward);
    }
    if total == 0 {
        return Err(Error::invalid("reference pool carries no historical outcomes"));
    }
    let global = total_conv as f64 / total as f64;
    let probs = alloc
        .iter()
        .zip(&conv)
        .map(|(&n, &s)| if n == 0 { global } else { s as f64 / n as f64 })
        .collect();
    Ok(ConversionTable {
        k,
        keying: TableKeying::ClusterAction,
        probs,
    })
}

/// Independent `U[lo, hi]` draw per (cluster, action, bucket).
pub fn build_uniform_conversion(k: usize, lo: f64, hi: f64, rng: &mut SimRng) -> Result<ConversionTable> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::invalid(format!("invalid probability interval [{lo}, {hi}]")));
    }
    if k == 0 {
        return Err(Error::invalid("conversion table needs at least one cluster"));
    }
    let n = ConversionTable::expected_len(k, TableKeying::ClusterActionBucket);
    let probs = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            (lo + (hi - lo) * u).min(hi)
        })
        .collect();
    Ok(ConversionTable {
        k,
        keying: TableKeying::ClusterActionBucket,
        probs,
    })
}

/// Boost entries whose (action, bucket) pair matches the historical rule by
/// a factor `1 + boost`, capped at 1.
pub fn build_fhat_adjusted_conversion(base: &ConversionTable, boost: f64) -> Result<ConversionTable> {
    if base.keying != TableKeying::ClusterActionBucket {
        return Err(Error::invalid("f̂-adjusted tables need a (cluster, action, bucket) base"));
    }
    if !(boost > 0.0 && boost.is_finite()) {
        return Err(Error::invalid(format!("boost must be positive, got {boost}")));
    }
    let mut out = base.clone();
    for c in 0..base.k {
        for b in FhatBucket::ALL {
            let a = b.rule_action();
            let p = base.probability(c, a, b)?;
            out.set(c, a, b, (p * (1.0 + boost)).min(1.0))?;
        }
    }
    Ok(out)
}

pub fn sample_reward(
    lead: &LeadRecord,
    action: Action,
    table: &ConversionTable,
    clusters: &ClusterModel,
    rng: &mut SimRng,
) -> Result<u8> {
    let cluster = assign_cluster(&lead.context, clusters)?;
    let p = table.probability(cluster, action, FhatBucket::of(lead.fhat))?;
    Ok(bernoulli(p, rng))
}

/// One uniform draw per call regardless of `p`, so the stream position never
/// depends on the probability.
pub fn bernoulli(p: f64, rng: &mut SimRng) -> u8 {
    let u: f64 = rng.gen();
    u8::from(u < p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn degenerate_interval_and_shape() {
        let t = build_uniform_conversion(10, 0.2, 0.2, &mut stream(1, Stream::ConversionTable)).unwrap();
        assert_eq!(t.probs.len(), 90);
        assert!(t.probs.iter().all(|&p| p == 0.2));
        assert!(build_uniform_conversion(10, 0.3, 0.2, &mut stream(1, Stream::ConversionTable)).is_err());
        assert!(build_uniform_conversion(10, -0.1, 0.2, &mut stream(1, Stream::ConversionTable)).is_err());
    }

    #[test]
    fn uniform_is_seeded() {
        let a = build_uniform_conversion(4, 0.0, 1.0, &mut stream(5, Stream::ConversionTable)).unwrap();
        let b = build_uniform_conversion(4, 0.0, 1.0, &mut stream(5, Stream::ConversionTable)).unwrap();
        assert_eq!(a, b);
        assert!(a.probs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn fhat_adjustment_rule() {
        let base = build_uniform_conversion(2, 0.2, 0.2, &mut stream(1, Stream::ConversionTable)).unwrap();
        let adj = build_fhat_adjusted_conversion(&base, 0.5).unwrap();
        assert!((adj.probability(0, Action::A, FhatBucket::Low).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(adj.probability(0, Action::B, FhatBucket::Low).unwrap(), 0.2);
        assert!((adj.probability(1, Action::B, FhatBucket::High).unwrap() - 0.3).abs() < 1e-15);
        assert!((adj.probability(1, Action::C, FhatBucket::Mid).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(adj.probability(1, Action::C, FhatBucket::High).unwrap(), 0.2);

        let hi = build_uniform_conversion(1, 0.9, 0.9, &mut stream(1, Stream::ConversionTable)).unwrap();
        let adj = build_fhat_adjusted_conversion(&hi, 0.5).unwrap();
        assert_eq!(adj.probability(0, Action::A, FhatBucket::Low).unwrap(), 1.0);

        assert!(build_fhat_adjusted_conversion(&base, 0.0).is_err());
        assert!(build_fhat_adjusted_conversion(&base, -1.0).is_err());
    }

    #[test]
    fn missing_key_is_an_error() {
        let t = build_uniform_conversion(2, 0.1, 0.2, &mut stream(1, Stream::ConversionTable)).unwrap();
        assert!(matches!(t.probability(2, Action::A, FhatBucket::Low), Err(Error::MissingKey(_))));
    }

    #[test]
    fn bernoulli_extremes_and_rate() {
        let mut rng = stream(9, Stream::Rewards);
        assert!((0..1000).all(|_| bernoulli(0.0, &mut rng) == 0));
        assert!((0..1000).all(|_| bernoulli(1.0, &mut rng) == 1));
        let n = 100_000;
        let s: u32 = (0..n).map(|_| u32::from(bernoulli(0.3, &mut rng))).sum();
        let mean = f64::from(s) / f64::from(n);
        assert!((0.29..=0.31).contains(&mean), "{mean}");
    }
}
