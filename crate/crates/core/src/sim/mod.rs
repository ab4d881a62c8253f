//! The daily simulation loop, the reward scheduler, the logged-data
//! collection phase and replay verification.

pub mod log;
pub mod scheduler;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, ContextVector, FhatBucket, LeadRecord, LoggedDataset, Observation, RewardEvent};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicyKind, PolicySpec};
use crate::rng::{stream, SimRng, Stream};
use crate::world::{bernoulli, sample_delay, World};

pub use scheduler::RewardScheduler;

/// How the logged training data is collected before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionScenario {
    Observational,
    PartiallyRandomized,
    FullyRandomized,
}

impl CollectionScenario {
    pub const ALL: [CollectionScenario; 3] = [
        CollectionScenario::Observational,
        CollectionScenario::PartiallyRandomized,
        CollectionScenario::FullyRandomized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollectionScenario::Observational => "observational",
            CollectionScenario::PartiallyRandomized => "partial",
            CollectionScenario::FullyRandomized => "random",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CollectionScenario::Observational => "Observational",
            CollectionScenario::PartiallyRandomized => "Partially randomized",
            CollectionScenario::FullyRandomized => "Fully Random",
        }
    }

    pub fn policy_kind(self) -> PolicyKind {
        match self {
            CollectionScenario::Observational => PolicyKind::RuleBased,
            CollectionScenario::PartiallyRandomized => PolicyKind::PartiallyRandom,
            CollectionScenario::FullyRandomized => PolicyKind::FullyRandom,
        }
    }
}

impl fmt::Display for CollectionScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollectionScenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observational" => Ok(CollectionScenario::Observational),
            "partial" | "partially_randomized" => Ok(CollectionScenario::PartiallyRandomized),
            "random" | "fully_randomized" => Ok(CollectionScenario::FullyRandomized),
            other => Err(Error::config(format!("unknown collection scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon_days: u32,
    pub leads_per_day: usize,
    /// Run seed from which the named streams are derived.
    pub seed: u64,
    /// Keep every observation delivered to the policy (warm start included).
    #[serde(default)]
    pub record_observations: bool,
    /// Keep the per-(lead, action) pre-sampled rewards and delays.
    #[serde(default)]
    pub record_counterfactuals: bool,
}

impl SimulationConfig {
    pub fn new(horizon_days: u32, leads_per_day: usize, seed: u64) -> Self {
        SimulationConfig {
            horizon_days,
            leads_per_day,
            seed,
            record_observations: false,
            record_counterfactuals: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_days < 1 {
            return Err(Error::config("horizon_days must be at least 1"));
        }
        Ok(())
    }
}

/// One allocation outcome in the result log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub lead_id: u64,
    pub arrival_day: u32,
    pub action: Action,
    pub reward: u8,
    pub delay_days: u32,
    pub observe_day: u32,
    pub observed: bool,
}

/// Rewards and delays pre-sampled for every action of one lead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub lead_id: u64,
    pub arrival_day: u32,
    pub rewards: [u8; Action::COUNT],
    pub delays: [u32; Action::COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub policy: String,
    pub horizon_days: u32,
    /// Sum of rewards observed on each day, index 0 = day 1.
    pub daily_rewards: Vec<u64>,
    pub cumulative_reward: u64,
    pub events: Vec<EventRecord>,
    pub observations: Vec<Observation>,
    pub counterfactuals: Vec<Counterfactual>,
    pub warm_start_observations: usize,
}

impl SimulationResult {
    pub fn cumulative_by_day(&self) -> Vec<u64> {
        self.daily_rewards
            .iter()
            .scan(0u64, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Stream handles for one phase of a run.
struct PhaseStreams {
    leads: SimRng,
    rewards: SimRng,
    delays: SimRng,
    policy: SimRng,
}

impl PhaseStreams {
    fn evaluation(seed: u64) -> Self {
        PhaseStreams {
            leads: stream(seed, Stream::Leads),
            rewards: stream(seed, Stream::Rewards),
            delays: stream(seed, Stream::Delays),
            policy: stream(seed, Stream::Policy),
        }
    }

    fn collection(seed: u64) -> Self {
        PhaseStreams {
            leads: stream(seed, Stream::CollectionLeads),
            rewards: stream(seed, Stream::CollectionRewards),
            delays: stream(seed, Stream::CollectionDelays),
            policy: stream(seed, Stream::CollectionPolicy),
        }
    }
}

/// Sample reward and delay for every action of `lead`. Consumes exactly one
/// draw per action from each of the reward and delay streams, independent
/// of the policy.
fn presample(lead: &LeadRecord, cluster: usize, world: &World, s: &mut PhaseStreams) -> Result<Counterfactual> {
    let bucket = FhatBucket::of(lead.fhat);
    let mut rewards = [0u8; Action::COUNT];
    let mut delays = [0u32; Action::COUNT];
    for a in Action::ALL {
        let p = world.conversion.probability(cluster, a, bucket)?;
        let r = bernoulli(p, &mut s.rewards);
        rewards[a.index()] = r;
        delays[a.index()] = sample_delay(a, r, &world.delays, &mut s.delays);
    }
    Ok(Counterfactual {
        lead_id: lead.lead_id,
        arrival_day: lead.arrival_day,
        rewards,
        delays,
    })
}

fn cluster_of(lead: &LeadRecord, world: &World) -> Result<usize> {
    crate::world::assign_cluster(&lead.context, &world.clusters)
}

struct Pending {
    context: ContextVector,
    fhat: f64,
}

/// Run the evaluation loop for `policy` over days `1..=horizon_days`.
///
/// `logged` supplies the collection-phase data; only its observed entries
/// are used for the policy's warm start and later retraining.
pub fn simulate(
    policy: &mut dyn Policy,
    world: &World,
    logged: Option<&LoggedDataset>,
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    config.validate()?;
    let horizon = config.horizon_days;
    let mut streams = PhaseStreams::evaluation(config.seed);
    let initial: Vec<Observation> = logged.map(LoggedDataset::observed_samples).unwrap_or_default();
    policy.warm_start(&initial)?;

    let retrain_every = policy.retrain_interval_days();
    let mut training_buffer = if retrain_every.is_some() { initial.clone() } else { Vec::new() };
    let mut observations = if config.record_observations { initial.clone() } else { Vec::new() };
    let warm = initial.len();
    drop(initial);

    let mut scheduler: RewardScheduler<(usize, Pending)> = RewardScheduler::new();
    let mut events: Vec<EventRecord> = Vec::with_capacity(horizon as usize * config.leads_per_day);
    let mut counterfactuals = Vec::new();
    let mut daily = vec![0u64; horizon as usize];
    let mut next_id = 1u64;

    for day in 1..=horizon {
        let leads = world.sample_leads(day, config.leads_per_day, &mut next_id, &mut streams.leads)?;
        for lead in leads {
            let cluster = cluster_of(&lead, world)?;
            let cf = presample(&lead, cluster, world, &mut streams)?;
            let action = policy.choose(&lead, &mut streams.policy)?;
            let i = action.index();
            let event = RewardEvent::new(lead.lead_id, action, cf.rewards[i], day, cf.delays[i]);
            events.push(EventRecord {
                lead_id: lead.lead_id,
                arrival_day: day,
                action,
                reward: event.reward,
                delay_days: event.delay_days,
                observe_day: event.observe_day,
                observed: false,
            });
            if config.record_counterfactuals {
                counterfactuals.push(cf);
            }
            let pending = Pending {
                context: lead.context,
                fhat: lead.fhat,
            };
            scheduler.push(event, (events.len() - 1, pending));
        }

        for (event, (idx, pending)) in scheduler.pop_due(day) {
            debug_assert_eq!(event.observe_day, day);
            daily[(day - 1) as usize] += u64::from(event.reward);
            events[idx].observed = true;
            let obs = Observation {
                context: pending.context,
                fhat: pending.fhat,
                action: event.action,
                reward: event.reward,
            };
            policy.observe(&obs)?;
            if retrain_every.is_some() {
                training_buffer.push(obs.clone());
            }
            if config.record_observations {
                observations.push(obs);
            }
        }

        if let Some(k) = retrain_every {
            if day % k == 0 {
                policy.retrain(&training_buffer)?;
            }
        }
    }

    let cumulative_reward = daily.iter().sum();
    Ok(SimulationResult {
        policy: policy.name().to_string(),
        horizon_days: horizon,
        daily_rewards: daily,
        cumulative_reward,
        events,
        observations,
        counterfactuals,
        warm_start_observations: warm,
    })
}

/// Run the collection phase with the scenario's logging policy.
pub fn collect_logged_data(
    scenario: CollectionScenario,
    world: &World,
    collection_days: u32,
    leads_per_day: usize,
    seed: u64,
) -> Result<LoggedDataset> {
    let mut policy = PolicySpec::new(scenario.policy_kind()).build(world.context_dim())?;
    collect_with_policy(policy.as_mut(), world, collection_days, leads_per_day, seed)
}

pub fn collect_with_policy(
    policy: &mut dyn Policy,
    world: &World,
    collection_days: u32,
    leads_per_day: usize,
    seed: u64,
) -> Result<LoggedDataset> {
    let mut streams = PhaseStreams::collection(seed);
    let mut dataset = LoggedDataset::new(collection_days);
    let mut next_id = 1u64;
    for day in 1..=collection_days {
        let leads = world.sample_leads(day, leads_per_day, &mut next_id, &mut streams.leads)?;
        for lead in leads {
            let cluster = cluster_of(&lead, world)?;
            let cf = presample(&lead, cluster, world, &mut streams)?;
            let action = policy.choose(&lead, &mut streams.policy)?;
            let i = action.index();
            dataset.push(lead.context, lead.fhat, action, cf.rewards[i], cf.delays[i], day);
        }
    }
    Ok(dataset)
}

/// Recount the result from its event log and check every accounting
/// invariant. The error names the first offending event.
pub fn replay_verify(result: &SimulationResult) -> Result<()> {
    let horizon = result.horizon_days;
    if result.daily_rewards.len() != horizon as usize {
        return Err(Error::Verification(format!(
            "daily series has {} entries for a {}-day horizon",
            result.daily_rewards.len(),
            horizon
        )));
    }
    let mut recount = 0u64;
    let mut daily = vec![0u64; horizon as usize];
    for (i, e) in result.events.iter().enumerate() {
        let describe = || format!("event #{i} (lead {}, arrival {}, observe {})", e.lead_id, e.arrival_day, e.observe_day);
        if e.reward > 1 {
            return Err(Error::Verification(format!("{}: reward {} is not binary", describe(), e.reward)));
        }
        if e.arrival_day < 1 || e.arrival_day > horizon {
            return Err(Error::Verification(format!("{}: arrival outside the horizon", describe())));
        }
        if u64::from(e.observe_day) != u64::from(e.arrival_day) + u64::from(e.delay_days) {
            return Err(Error::Verification(format!(
                "{}: observe_day != arrival_day + delay_days ({} + {})",
                describe(),
                e.arrival_day,
                e.delay_days
            )));
        }
        let due = e.observe_day <= horizon;
        if e.observed != due {
            return Err(Error::Verification(format!(
                "{}: observed flag is {} but the outcome is {} the horizon",
                describe(),
                e.observed,
                if due { "inside" } else { "beyond" }
            )));
        }
        if due {
            recount += u64::from(e.reward);
            daily[(e.observe_day - 1) as usize] += u64::from(e.reward);
        }
    }
    if recount != result.cumulative_reward {
        return Err(Error::Verification(format!(
            "recounted cumulative reward {recount} differs from recorded {}",
            result.cumulative_reward
        )));
    }
    if let Some(day) = (0..daily.len()).find(|&d| daily[d] != result.daily_rewards[d]) {
        return Err(Error::Verification(format!(
            "day {}: recounted {} rewards, recorded {}",
            day + 1,
            daily[day],
            result.daily_rewards[day]
        )));
    }
    Ok(())
}

/// Boolean form of [`replay_verify`].
pub fn is_consistent(result: &SimulationResult) -> bool {
    replay_verify(result).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_reference_dataset, GeneratorConfig, WorldBase, WorldConfig};

    fn world(lambda: f64) -> World {
        let pool = generate_reference_dataset(&GeneratorConfig {
            pool_size: 1500,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let cfg = WorldConfig {
            delay_lambda: lambda,
            ..WorldConfig::default()
        };
        WorldBase::fit(pool, &cfg, 1).unwrap().realize(&cfg, 2).unwrap()
    }

    #[test]
    fn observational_collection_follows_rule() {
        let w = world(1.0);
        let ds = collect_logged_data(CollectionScenario::Observational, &w, 20, 50, 3).unwrap();
        assert_eq!(ds.len(), 1000);
        for e in &ds.entries {
            assert_eq!(e.action, crate::policies::rule_based_choose(e.fhat));
            assert_eq!(e.observed, e.arrival_day + e.delay_days <= 20);
        }
    }

    #[test]
    fn zero_delay_collection_observes_everything() {
        let w = world(0.0);
        let ds = collect_logged_data(CollectionScenario::FullyRandomized, &w, 10, 30, 3).unwrap();
        assert!(ds.entries.iter().all(|e| e.observed));
        let empty = collect_logged_data(CollectionScenario::FullyRandomized, &w, 0, 30, 3).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn single_day_single_lead() {
        let w = world(0.0);
        let mut p = PolicySpec::new(PolicyKind::RuleBased).build(w.context_dim()).unwrap();
        let mut cfg = SimulationConfig::new(1, 1, 9);
        cfg.record_counterfactuals = true;
        let r = simulate(p.as_mut(), &w, None, &cfg).unwrap();
        assert_eq!(r.events.len(), 1);
        let e = r.events[0];
        assert_eq!(e.delay_days, 0);
        assert_eq!(r.cumulative_reward, u64::from(e.reward));
        assert_eq!(r.counterfactuals[0].rewards[e.action.index()], e.reward);
        replay_verify(&r).unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let w = world(1.0);
        let mut p = PolicySpec::new(PolicyKind::FullyRandom).build(w.context_dim()).unwrap();
        let r = simulate(p.as_mut(), &w, None, &SimulationConfig::new(60, 20, 4)).unwrap();
        replay_verify(&r).unwrap();
        let mut bad = r.clone();
        bad.events[5].observe_day += 1;
        assert!(!is_consistent(&bad));
        let mut bad = r.clone();
        bad.cumulative_reward += 1;
        assert!(!is_consistent(&bad));
        let empty = SimulationResult {
            policy: "none".into(),
            horizon_days: 3,
            daily_rewards: vec![0; 3],
            cumulative_reward: 0,
            events: vec![],
            observations: vec![],
            counterfactuals: vec![],
            warm_start_observations: 0,
        };
        assert!(is_consistent(&empty));
    }

    #[test]
    fn scenario_names() {
        for s in CollectionScenario::ALL {
            assert_eq!(s.as_str().parse::<CollectionScenario>().unwrap(), s);
        }
        assert!("bogus".parse::<CollectionScenario>().is_err());
    }
}
