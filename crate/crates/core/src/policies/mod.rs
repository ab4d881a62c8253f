//! Allocation policies and the contract the simulator drives them through.

pub mod gbt;
pub mod linucb;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{argmax_action, Action, ContextVector, FhatBucket, LeadRecord, Observation};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use gbt::{gbt_train, BoostedTreeModel, GbtParams};
pub use linucb::LinUcbState;

/// A channel-allocation policy.
///
/// The simulator calls `choose` for every lead, `observe` once per reward
/// event on its observation day, and `retrain` at the end of every day
/// divisible by `retrain_interval_days`. Pending outcomes are never exposed.
pub trait Policy: Send {
    fn name(&self) -> &str;

    fn choose(&mut self, lead: &LeadRecord, rng: &mut SimRng) -> Result<Action>;

    fn observe(&mut self, _obs: &Observation) -> Result<()> {
        Ok(())
    }

    fn retrain(&mut self, _observed: &[Observation]) -> Result<()> {
        Ok(())
    }

    fn retrain_interval_days(&self) -> Option<u32> {
        None
    }

    /// Initial fit on the observed part of the logged dataset.
    fn warm_start(&mut self, observed: &[Observation]) -> Result<()> {
        self.retrain(observed)
    }

    /// Downcast hook for inspecting LinUCB state in tests and tooling.
    fn linucb_state(&mut self) -> Option<&mut LinUcbState> {
        None
    }
}

pub fn rule_based_choose(fhat: f64) -> Action {
    FhatBucket::of(fhat).rule_action()
}

/// Rule-based outside the MID bucket; inside it C with probability 2/3,
/// otherwise B. Always consumes one random number.
pub fn partially_randomized_choose(fhat: f64, rng: &mut SimRng) -> Action {
    let u: f64 = rng.gen();
    match FhatBucket::of(fhat) {
        FhatBucket::Mid => {
            if u < 2.0 / 3.0 {
                Action::C
            } else {
                Action::B
            }
        }
        b => b.rule_action(),
    }
}

pub fn fully_randomized_choose(rng: &mut SimRng) -> Action {
    Action::ALL[rng.gen_range(0..Action::COUNT)]
}

/// Context with the one-hot action appended, as consumed by the tree model.
pub fn action_features(context: &ContextVector, action: Action) -> Vec<f64> {
    let mut v = Vec::with_capacity(context.dim() + Action::COUNT);
    v.extend_from_slice(context.as_slice());
    for a in Action::ALL {
        v.push(if a == action { 1.0 } else { 0.0 });
    }
    v
}

pub fn supervised_scores(context: &ContextVector, model: &BoostedTreeModel) -> Result<[f64; Action::COUNT]> {
    if context.dim() + Action::COUNT != model.n_features {
        return Err(Error::invalid(format!(
            "model expects {} features, context gives {}",
            model.n_features,
            context.dim() + Action::COUNT
        )));
    }
    let mut buf = action_features(context, Action::A);
    let d = context.dim();
    let mut out = [0.0; Action::COUNT];
    for a in Action::ALL {
        for (j, b) in Action::ALL.iter().enumerate() {
            buf[d + j] = if *b == a { 1.0 } else { 0.0 };
        }
        out[a.index()] = model.predict_proba(&buf);
    }
    Ok(out)
}

pub fn supervised_choose(lead: &LeadRecord, model: Option<&BoostedTreeModel>) -> Result<Action> {
    let model = model.ok_or(Error::Untrained)?;
    Ok(argmax_action(supervised_scores(&lead.context, model)?))
}

/// Returns the action and whether the exploration branch was taken.
/// Consumes one random number, plus one more when exploring.
pub fn epsilon_greedy_choose(
    lead: &LeadRecord,
    model: Option<&BoostedTreeModel>,
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<(Action, bool)> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let u: f64 = rng.gen();
    if u < epsilon {
        Ok((fully_randomized_choose(rng), true))
    } else {
        Ok((supervised_choose(lead, model)?, false))
    }
}

pub fn train_supervised(observed: &[Observation], params: &GbtParams) -> Result<BoostedTreeModel> {
    let rows: Vec<Vec<f64>> = observed.iter().map(|o| action_features(&o.context, o.action)).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let labels: Vec<u8> = observed.iter().map(|o| o.reward).collect();
    gbt_train(&refs, &labels, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RuleBased,
    Supervised,
    EpsilonGreedy,
    LinUcb,
    FullyRandom,
    PartiallyRandom,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::RuleBased => "rule_based",
            PolicyKind::Supervised => "supervised",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::LinUcb => "lin_ucb",
            PolicyKind::FullyRandom => "fully_random",
            PolicyKind::PartiallyRandom => "partially_random",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rule_based" => Ok(PolicyKind::RuleBased),
            "supervised" => Ok(PolicyKind::Supervised),
            "epsilon_greedy" => Ok(PolicyKind::EpsilonGreedy),
            "lin_ucb" | "linucb" => Ok(PolicyKind::LinUcb),
            "fully_random" => Ok(PolicyKind::FullyRandom),
            "partially_random" => Ok(PolicyKind::PartiallyRandom),
            other => Err(Error::config(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// One entry of the policy list in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_retrain")]
    pub retrain_interval_days: u32,
    #[serde(default)]
    pub gbt: GbtParams,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    1.0
}
fn default_retrain() -> u32 {
    90
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            name: None,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            retrain_interval_days: default_retrain(),
            gbt: GbtParams::default(),
        }
    }

    pub fn epsilon_greedy(epsilon: f64) -> Self {
        PolicySpec {
            epsilon,
            ..PolicySpec::new(PolicyKind::EpsilonGreedy)
        }
    }

    /// The five policies compared in the default experiment.
    pub fn default_list() -> Vec<PolicySpec> {
        vec![
            PolicySpec::new(PolicyKind::RuleBased),
            PolicySpec::new(PolicyKind::LinUcb),
            PolicySpec::new(PolicyKind::Supervised),
            PolicySpec::epsilon_greedy(0.05),
            PolicySpec::epsilon_greedy(0.1),
        ]
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match self.kind {
            PolicyKind::EpsilonGreedy => format!("epsilon_greedy_{}", self.epsilon),
            k => k.as_str().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.retrain_interval_days == 0 {
            return Err(Error::config("retrain_interval_days must be at least 1"));
        }
        self.gbt.validate()
    }

    pub fn build(&self, context_dim: usize) -> Result<Box<dyn Policy>> {
        self.validate()?;
        let name = self.label();
        Ok(match self.kind {
            PolicyKind::RuleBased => Box::new(RuleBasedPolicy { name }),
            PolicyKind::FullyRandom => Box::new(FullyRandomPolicy { name }),
            PolicyKind::PartiallyRandom => Box::new(PartiallyRandomPolicy { name }),
            PolicyKind::LinUcb => Box::new(LinUcbPolicy {
                name,
                state: LinUcbState::new(context_dim, self.alpha)?,
            }),
            PolicyKind::Supervised => Box::new(SupervisedPolicy::new(
                name,
                self.gbt.clone(),
                0.0,
                self.retrain_interval_days,
            )),
            PolicyKind::EpsilonGreedy => Box::new(SupervisedPolicy::new(
                name,
                self.gbt.clone(),
                self.epsilon,
                self.retrain_interval_days,
            )),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub struct RuleBasedPolicy {
    name: String,
}

impl RuleBasedPolicy {
    pub fn new() -> Self {
        RuleBasedPolicy {
            name: PolicyKind::RuleBased.as_str().into(),
        }
    }
}

impl Default for RuleBasedPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for RuleBasedPolicy {
    fn name(&self) -> &str {
        &self.name
    }
    fn choose(&mut self, lead: &LeadRecord, _rng: &mut SimRng) -> Result<Action> {
        Ok(rule_based_choose(lead.fhat))
    }
}

pub struct FullyRandomPolicy {
    name: String,
}

impl Policy for FullyRandomPolicy {
    fn name(&self) -> &str {
        &self.name
    }
    fn choose(&mut self, _lead: &LeadRecord, rng: &mut SimRng) -> Result<Action> {
        Ok(fully_randomized_choose(rng))
    }
}

pub struct PartiallyRandomPolicy {
    name: String,
}

impl Policy for PartiallyRandomPolicy {
    fn name(&self) -> &str {
        &self.name
    }
    fn choose(&mut self, lead: &LeadRecord, rng: &mut SimRng) -> Result<Action> {
        Ok(partially_randomized_choose(lead.fhat, rng))
    }
}

pub struct LinUcbPolicy {
    name: String,
    pub state: LinUcbState,
}

impl LinUcbPolicy {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        Ok(LinUcbPolicy {
            name: PolicyKind::LinUcb.as_str().into(),
            state: LinUcbState::new(dim, alpha)?,
        })
    }
}

impl Policy for LinUcbPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, lead: &LeadRecord, _rng: &mut SimRng) -> Result<Action> {
        self.state.choose(&lead.context)
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.state.update(&obs.context, obs.action, obs.reward)
    }

    fn warm_start(&mut self, observed: &[Observation]) -> Result<()> {
        for o in observed {
            self.observe(o)?;
        }
        Ok(())
    }

    fn linucb_state(&mut self) -> Option<&mut LinUcbState> {
        Some(&mut self.state)
    }
}

/// Boosted-tree policy; with `epsilon > 0` it is the ε-greedy variant.
/// Until a model can be trained it falls back to the rule-based choice.
pub struct SupervisedPolicy {
    name: String,
    params: GbtParams,
    epsilon: f64,
    retrain_interval: u32,
    model: Option<BoostedTreeModel>,
    pub explored: u64,
    pub decisions: u64,
}

impl SupervisedPolicy {
    pub fn new(name: String, params: GbtParams, epsilon: f64, retrain_interval: u32) -> Self {
        SupervisedPolicy {
            name,
            params,
            epsilon,
            retrain_interval,
            model: None,
            explored: 0,
            decisions: 0,
        }
    }

    pub fn model(&self) -> Option<&BoostedTreeModel> {
        self.model.as_ref()
    }

    pub fn set_model(&mut self, model: BoostedTreeModel) {
        self.model = Some(model);
    }
}

impl Policy for SupervisedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, lead: &LeadRecord, rng: &mut SimRng) -> Result<Action> {
        self.decisions += 1;
        if self.model.is_none() {
            return Ok(rule_based_choose(lead.fhat));
        }
        if self.epsilon > 0.0 {
            let (a, explored) = epsilon_greedy_choose(lead, self.model.as_ref(), self.epsilon, rng)?;
            self.explored += u64::from(explored);
            Ok(a)
        } else {
            supervised_choose(lead, self.model.as_ref())
        }
    }

    fn retrain(&mut self, observed: &[Observation]) -> Result<()> {
        if observed.is_empty() {
            return Ok(());
        }
        self.model = Some(train_supervised(observed, &self.params)?);
        Ok(())
    }

    fn retrain_interval_days(&self) -> Option<u32> {
        Some(self.retrain_interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::sync::Arc;

    fn lead(fhat: f64, ctx: &[f64]) -> LeadRecord {
        LeadRecord {
            lead_id: 1,
            arrival_day: 1,
            raw: Arc::new(crate::preprocess::RawLeadFeatures::new(vec![])),
            context: ContextVector(ctx.to_vec()),
            fhat,
        }
    }

    #[test]
    fn rule_mapping() {
        assert_eq!(rule_based_choose(5.0), Action::A);
        assert_eq!(rule_based_choose(25.0), Action::B);
        assert_eq!(rule_based_choose(10.0), Action::C);
        assert_eq!(rule_based_choose(20.0), Action::C);
        assert_eq!(rule_based_choose(15.0), Action::C);
    }

    #[test]
    fn partial_randomization_outside_mid_is_deterministic() {
        let mut rng = stream(1, Stream::Policy);
        for _ in 0..1000 {
            assert_eq!(partially_randomized_choose(5.0, &mut rng), Action::A);
            assert_eq!(partially_randomized_choose(25.0, &mut rng), Action::B);
            assert_ne!(partially_randomized_choose(15.0, &mut rng), Action::A);
        }
    }

    #[test]
    fn fully_random_is_seeded() {
        let a: Vec<Action> = {
            let mut r = stream(4, Stream::Policy);
            (0..50).map(|_| fully_randomized_choose(&mut r)).collect()
        };
        let b: Vec<Action> = {
            let mut r = stream(4, Stream::Policy);
            (0..50).map(|_| fully_randomized_choose(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    fn stump(values: [f64; 3]) -> BoostedTreeModel {
        // feature 1..=3 is the action one-hot; one stump per action
        let trees = (0..3)
            .map(|j| {
                let logit = (values[j] / (1.0 - values[j])).ln();
                Tree::from_stump(1 + j, 0.5, 0.0, logit)
            })
            .collect();
        BoostedTreeModel {
            n_features: 4,
            base_score: 0.0,
            trees,
            loss_trace: vec![],
        }
    }

    use gbt::Tree;

    #[test]
    fn supervised_argmax_and_ties() {
        let l = lead(15.0, &[0.3]);
        assert_eq!(supervised_choose(&l, Some(&stump([0.1, 0.4, 0.2]))).unwrap(), Action::B);
        assert_eq!(supervised_choose(&l, Some(&stump([0.3, 0.3, 0.3]))).unwrap(), Action::A);
        assert!(matches!(supervised_choose(&l, None), Err(Error::Untrained)));
        let s = supervised_scores(&l.context, &stump([0.1, 0.4, 0.2])).unwrap();
        assert!((s[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn epsilon_extremes() {
        let l = lead(15.0, &[0.3]);
        let m = stump([0.1, 0.4, 0.2]);
        let mut rng = stream(2, Stream::Policy);
        for _ in 0..500 {
            assert_eq!(epsilon_greedy_choose(&l, Some(&m), 0.0, &mut rng).unwrap(), (Action::B, false));
            assert!(epsilon_greedy_choose(&l, Some(&m), 1.0, &mut rng).unwrap().1);
        }
        assert!(epsilon_greedy_choose(&l, Some(&m), 1.5, &mut rng).is_err());
    }

    #[test]
    fn spec_defaults() {
        let s = PolicySpec::new(PolicyKind::Supervised);
        assert_eq!(s.retrain_interval_days, 90);
        assert_eq!(s.gbt, GbtParams::default());
        assert_eq!(s.gbt.n_trees, 100);
        assert_eq!(PolicySpec::default_list().len(), 5);
        assert_eq!(PolicySpec::epsilon_greedy(0.05).label(), "epsilon_greedy_0.05");
    }

    #[test]
    fn untrained_supervised_policy_follows_rule() {
        let mut p = PolicySpec::new(PolicyKind::Supervised).build(1).unwrap();
        let mut rng = stream(1, Stream::Policy);
        assert_eq!(p.choose(&lead(5.0, &[0.0]), &mut rng).unwrap(), Action::A);
        assert_eq!(p.retrain_interval_days(), Some(90));
    }
}
