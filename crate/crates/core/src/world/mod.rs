//! Ground-truth "state of the world": the lead distribution, clustering,
//! conversion scenarios and the delay model.

pub mod conversion;
pub mod delay;
pub mod generator;
pub mod kmeans;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ContextVector, LeadRecord};
use crate::error::{Error, Result};
use crate::preprocess::{fit_preprocessor, transform, HistoricalOutcome, PreprocessStats, RawLeadFeatures, Schema};
use crate::rng::{stream, SimRng, Stream};

pub use conversion::{
    bernoulli, build_fhat_adjusted_conversion, build_historical_conversion, build_uniform_conversion, sample_reward,
    ConversionTable, TableKeying,
};
pub use delay::{fit_delay_model, sample_delay, DelayModel};
pub use generator::{generate_reference_dataset, DelayShape, GeneratorConfig};
pub use kmeans::{assign_cluster, kmeans_fit, ClusterModel, KMeansFit};

/// The empirical lead distribution F(X) plus historical outcomes used only
/// for world construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePool {
    pub schema: Schema,
    pub leads: Vec<Arc<RawLeadFeatures>>,
    pub history: Vec<Option<HistoricalOutcome>>,
}

impl ReferencePool {
    pub fn new(schema: Schema, rows: Vec<(Arc<RawLeadFeatures>, Option<HistoricalOutcome>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("reference pool is empty"));
        }
        for (raw, _) in &rows {
            raw.check(&schema)?;
        }
        let (leads, history) = rows.into_iter().unzip();
        Ok(ReferencePool {
            schema,
            leads,
            history,
        })
    }

    pub fn len(&self) -> usize {
        self.leads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leads.is_empty()
    }

    pub fn rows(&self) -> Vec<(Arc<RawLeadFeatures>, Option<HistoricalOutcome>)> {
        self.leads.iter().cloned().zip(self.history.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionScenario {
    Historical,
    Uniform,
    FhatAdjusted,
}

impl ConversionScenario {
    pub const ALL: [ConversionScenario; 3] = [
        ConversionScenario::Historical,
        ConversionScenario::Uniform,
        ConversionScenario::FhatAdjusted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConversionScenario::Historical => "historical",
            ConversionScenario::Uniform => "uniform",
            ConversionScenario::FhatAdjusted => "fhat_adjusted",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConversionScenario::Historical => "Historical",
            ConversionScenario::Uniform => "Uniform",
            ConversionScenario::FhatAdjusted => "fhat-adjusted Uniform",
        }
    }
}

impl fmt::Display for ConversionScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConversionScenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "historical" => Ok(ConversionScenario::Historical),
            "uniform" => Ok(ConversionScenario::Uniform),
            "fhat_adjusted" => Ok(ConversionScenario::FhatAdjusted),
            other => Err(Error::config(format!("unknown conversion scenario `{other}`"))),
        }
    }
}

/// World-construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub k: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub conversion: ConversionScenario,
    /// Overrides the Uniform interval; defaults to the Historical table's range.
    pub uniform_lo: Option<f64>,
    pub uniform_hi: Option<f64>,
    pub fhat_boost: f64,
    pub delay_lambda: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            k: 10,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            conversion: ConversionScenario::FhatAdjusted,
            uniform_lo: None,
            uniform_hi: None,
            fhat_boost: 0.5,
            delay_lambda: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("world.k must be at least 1"));
        }
        if !(self.fhat_boost > 0.0) {
            return Err(Error::config("world.fhat_boost must be positive"));
        }
        if !(self.delay_lambda >= 0.0 && self.delay_lambda.is_finite()) {
            return Err(Error::config("world.delay_lambda must be >= 0"));
        }
        if self.uniform_lo.is_some() != self.uniform_hi.is_some() {
            return Err(Error::config("set both world.uniform_lo and world.uniform_hi, or neither"));
        }
        Ok(())
    }
}

/// Everything about the world that does not depend on the per-run seed:
/// preprocessing, clustering, the Historical table and the delay pools.
#[derive(Debug, Clone)]
pub struct WorldBase {
    pub pool: Arc<ReferencePool>,
    pub stats: Arc<PreprocessStats>,
    pub pool_contexts: Arc<Vec<ContextVector>>,
    pub pool_clusters: Arc<Vec<usize>>,
    pub clusters: Arc<ClusterModel>,
    pub historical: ConversionTable,
    pub delays: DelayModel,
    pub kmeans_iterations: usize,
}

impl WorldBase {
    pub fn fit(pool: ReferencePool, config: &WorldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let raws: Vec<RawLeadFeatures> = pool.leads.iter().map(|r| (**r).clone()).collect();
        let stats = fit_preprocessor(&pool.schema, &raws)?;
        let contexts: Vec<ContextVector> = pool
            .leads
            .iter()
            .map(|r| transform(r, &stats))
            .collect::<Result<_>>()?;
        let fit = kmeans_fit(
            &contexts,
            config.k,
            config.kmeans_max_iters,
            config.kmeans_tol,
            &mut stream(seed, Stream::KMeans),
        )?;
        let historical = build_historical_conversion(&pool, &fit.model, &contexts)?;
        let delays = fit_delay_model(&pool)?;
        let pool_clusters = contexts
            .iter()
            .map(|c| assign_cluster(c, &fit.model))
            .collect::<Result<_>>()?;
        Ok(WorldBase {
            pool: Arc::new(pool),
            stats: Arc::new(stats),
            pool_contexts: Arc::new(contexts),
            pool_clusters: Arc::new(pool_clusters),
            clusters: Arc::new(fit.model),
            historical,
            delays,
            kmeans_iterations: fit.iterations,
        })
    }

    /// Conversion table for a scenario, drawn from `seed` when random.
    pub fn conversion_table(&self, config: &WorldConfig, seed: u64) -> Result<ConversionTable> {
        match config.conversion {
            ConversionScenario::Historical => Ok(self.historical.clone()),
            ConversionScenario::Uniform | ConversionScenario::FhatAdjusted => {
                let (lo, hi) = match (config.uniform_lo, config.uniform_hi) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => self.historical.min_max(),
                };
                let base =
                    build_uniform_conversion(self.clusters.k(), lo, hi, &mut stream(seed, Stream::ConversionTable))?;
                if config.conversion == ConversionScenario::Uniform {
                    Ok(base)
                } else {
                    build_fhat_adjusted_conversion(&base, config.fhat_boost)
                }
            }
        }
    }

    pub fn realize(&self, config: &WorldConfig, seed: u64) -> Result<World> {
        config.validate()?;
        Ok(World {
            pool: Arc::clone(&self.pool),
            stats: Arc::clone(&self.stats),
            pool_contexts: Some(Arc::clone(&self.pool_contexts)),
            clusters: Arc::clone(&self.clusters),
            conversion: self.conversion_table(config, seed)?,
            delays: self.delays.clone().with_lambda(config.delay_lambda)?,
        })
    }
}

/// A fully specified world for one simulation run.
#[derive(Debug, Clone)]
pub struct World {
    pub pool: Arc<ReferencePool>,
    pub stats: Arc<PreprocessStats>,
    /// Cached `transform` of every pool lead, if available.
    pub pool_contexts: Option<Arc<Vec<ContextVector>>>,
    pub clusters: Arc<ClusterModel>,
    pub conversion: ConversionTable,
    pub delays: DelayModel,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        self.clusters.validate()?;
        self.conversion.validate()?;
        self.delays.validate()?;
        if self.conversion.k != self.clusters.k() {
            return Err(Error::invalid("conversion table and cluster model disagree on k"));
        }
        if self.clusters.dim() != self.stats.dim {
            return Err(Error::invalid("centroid dimension differs from context dimension"));
        }
        if let Some(ctx) = &self.pool_contexts {
            if ctx.len() != self.pool.len() {
                return Err(Error::invalid("cached contexts do not match the pool"));
            }
        }
        Ok(())
    }

    pub fn context_dim(&self) -> usize {
        self.stats.dim
    }

    /// Draw `n` leads for `day`; see [`sample_leads`]. Uses cached contexts
    /// when present, which is equivalent because `transform` is pure.
    pub fn sample_leads(&self, day: u32, n: usize, next_id: &mut u64, rng: &mut SimRng) -> Result<Vec<LeadRecord>> {
        match &self.pool_contexts {
            None => sample_leads(day, n, &self.pool, &self.stats, next_id, rng),
            Some(ctx) => {
                let fhat_idx = self.pool.schema.fhat_index();
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let i = rng.gen_range(0..self.pool.len());
                    let raw = &self.pool.leads[i];
                    out.push(LeadRecord {
                        lead_id: take_id(next_id),
                        arrival_day: day,
                        fhat: fhat_of(raw, fhat_idx),
                        raw: Arc::clone(raw),
                        context: ctx[i].clone(),
                    });
                }
                Ok(out)
            }
        }
    }
}

fn take_id(next_id: &mut u64) -> u64 {
    let id = *next_id;
    *next_id += 1;
    id
}

fn fhat_of(raw: &RawLeadFeatures, idx: usize) -> f64 {
    match raw.values.get(idx) {
        Some(crate::preprocess::FeatureValue::Real(Some(x))) => *x,
        _ => f64::NAN,
    }
}

/// Draw `n` leads uniformly with replacement from the pool and transform
/// them. Lead ids are taken from `next_id`, which is advanced.
pub fn sample_leads(
    day: u32,
    n: usize,
    pool: &ReferencePool,
    stats: &PreprocessStats,
    next_id: &mut u64,
    rng: &mut SimRng,
) -> Result<Vec<LeadRecord>> {
    if pool.is_empty() {
        return Err(Error::invalid("cannot sample from an empty pool"));
    }
    let fhat_idx = pool.schema.fhat_index();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = &pool.leads[rng.gen_range(0..pool.len())];
        out.push(LeadRecord {
            lead_id: take_id(next_id),
            arrival_day: day,
            fhat: fhat_of(raw, fhat_idx),
            context: transform(raw, stats)?,
            raw: Arc::clone(raw),
        });
    }
    Ok(out)
}

pub const WORLD_FORMAT: &str = "salesim-world";
pub const WORLD_VERSION: u32 = 1;

/// Serializable world, so the same ground truth can be replayed across
/// policies and runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSnapshot {
    pub format: String,
    pub version: u32,
    pub stats: PreprocessStats,
    pub clusters: ClusterModel,
    pub conversion: ConversionTable,
    pub delays: DelayModel,
    pub pool: ReferencePool,
}

impl WorldSnapshot {
    pub fn from_world(world: &World) -> Self {
        WorldSnapshot {
            format: WORLD_FORMAT.into(),
            version: WORLD_VERSION,
            stats: (*world.stats).clone(),
            clusters: (*world.clusters).clone(),
            conversion: world.conversion.clone(),
            delays: world.delays.clone(),
            pool: (*world.pool).clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let snap: WorldSnapshot = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if snap.format != WORLD_FORMAT || snap.version != WORLD_VERSION {
            return Err(Error::parse(
                origin,
                format!("unsupported world format {} v{}", snap.format, snap.version),
            ));
        }
        Ok(snap)
    }

    pub fn into_world(self) -> Result<World> {
        let stats = self.stats.finish()?;
        for raw in &self.pool.leads {
            raw.check(&stats.schema)?;
        }
        let contexts: Vec<ContextVector> = self.pool.leads.iter().map(|r| transform(r, &stats)).collect::<Result<_>>()?;
        let world = World {
            pool: Arc::new(self.pool),
            stats: Arc::new(stats),
            pool_contexts: Some(Arc::new(contexts)),
            clusters: Arc::new(self.clusters),
            conversion: self.conversion,
            delays: self.delays,
        };
        world.validate()?;
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_base() -> WorldBase {
        let pool = generate_reference_dataset(&GeneratorConfig {
            pool_size: 2000,
            ..GeneratorConfig::default()
        })
        .unwrap();
        WorldBase::fit(pool, &WorldConfig::default(), 7).unwrap()
    }

    #[test]
    fn sampling_leads_matches_uncached_path() {
        let base = small_base();
        let world = base.realize(&WorldConfig::default(), 3).unwrap();
        world.validate().unwrap();
        let mut id_a = 1;
        let mut id_b = 1;
        let a = world.sample_leads(4, 200, &mut id_a, &mut stream(1, Stream::Leads)).unwrap();
        let b = sample_leads(4, 200, &world.pool, &world.stats, &mut id_b, &mut stream(1, Stream::Leads)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|l| l.arrival_day == 4));
        assert_eq!(id_a, 201);
        let empty = world.sample_leads(4, 0, &mut id_a, &mut stream(1, Stream::Leads)).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn ten_clusters_all_non_empty() {
        let base = small_base();
        assert_eq!(base.clusters.k(), 10);
        let mut counts = [0usize; 10];
        for &c in base.pool_clusters.iter() {
            counts[c] += 1;
        }
        assert!(counts.iter().all(|&n| n > 0), "{counts:?}");
    }

    #[test]
    fn snapshot_round_trip() {
        let base = small_base();
        let world = base.realize(&WorldConfig::default(), 11).unwrap();
        let json = WorldSnapshot::from_world(&world).to_json().unwrap();
        let back = WorldSnapshot::from_json(&json, "mem").unwrap().into_world().unwrap();
        assert_eq!(back.conversion, world.conversion);
        assert_eq!(back.clusters, world.clusters);
        assert_eq!(back.pool_contexts, world.pool_contexts);
        assert!(WorldSnapshot::from_json(&json.replace("salesim-world", "other"), "mem").is_err());
    }
}
