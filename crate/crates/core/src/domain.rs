//! Core value types shared across the simulator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::RawLeadFeatures;

/// A sales channel. The derived ordering `A < B < C` is the canonical
/// tie-breaking order used by every argmax in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    A,
    B,
    C,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::A, Action::B, Action::C];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Action::A => 0,
            Action::B => 1,
            Action::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::A => "A",
            Action::B => "B",
            Action::C => "C",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Action::A),
            "B" | "b" => Ok(Action::B),
            "C" | "c" => Ok(Action::C),
            other => Err(Error::invalid(format!("unknown action `{other}`"))),
        }
    }
}

/// Index of the highest score, ties resolved towards the lowest index
/// (and therefore the canonical action order).
pub fn argmax_action(scores: [f64; Action::COUNT]) -> Action {
    let mut best = 0;
    for i in 1..Action::COUNT {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// Bucket of the raw f̂ value, aligned with the rule-based thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FhatBucket {
    Low,
    Mid,
    High,
}

impl FhatBucket {
    pub const ALL: [FhatBucket; 3] = [FhatBucket::Low, FhatBucket::Mid, FhatBucket::High];
    pub const LOW_THRESHOLD: f64 = 10.0;
    pub const HIGH_THRESHOLD: f64 = 20.0;

    pub fn of(fhat: f64) -> FhatBucket {
        if fhat < Self::LOW_THRESHOLD {
            FhatBucket::Low
        } else if fhat > Self::HIGH_THRESHOLD {
            FhatBucket::High
        } else {
            FhatBucket::Mid
        }
    }

    pub fn index(self) -> usize {
        match self {
            FhatBucket::Low => 0,
            FhatBucket::Mid => 1,
            FhatBucket::High => 2,
        }
    }

    /// The channel the historical rule assigns to this bucket.
    pub fn rule_action(self) -> Action {
        match self {
            FhatBucket::Low => Action::A,
            FhatBucket::Mid => Action::C,
            FhatBucket::High => Action::B,
        }
    }
}

/// Preprocessed context vector fed to learned policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(pub Vec<f64>);

impl ContextVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ContextVector {
    fn from(v: Vec<f64>) -> Self {
        ContextVector(v)
    }
}

/// One account arriving on a simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadRecord {
    pub lead_id: u64,
    pub arrival_day: u32,
    pub raw: Arc<RawLeadFeatures>,
    pub context: ContextVector,
    /// Pre-normalization f̂, used by the rule-based logic.
    pub fhat: f64,
}

/// A scheduled observation of an allocation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub lead_id: u64,
    pub action: Action,
    pub reward: u8,
    pub arrival_day: u32,
    pub delay_days: u32,
    pub observe_day: u32,
}

impl RewardEvent {
    pub fn new(lead_id: u64, action: Action, reward: u8, arrival_day: u32, delay_days: u32) -> Self {
        RewardEvent {
            lead_id,
            action,
            reward,
            arrival_day,
            delay_days,
            observe_day: arrival_day + delay_days,
        }
    }
}

/// One row of a logged (collection-phase) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEntry {
    pub context: ContextVector,
    pub fhat: f64,
    pub action: Action,
    pub reward: u8,
    pub delay_days: u32,
    pub arrival_day: u32,
    pub observed: bool,
}

/// Logged allocation data. Entries whose outcome was still pending at the
/// cutoff are retained for bookkeeping but hidden from [`LoggedDataset::observed`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoggedDataset {
    pub cutoff_day: u32,
    pub entries: Vec<LoggedEntry>,
}

impl LoggedDataset {
    pub fn new(cutoff_day: u32) -> Self {
        LoggedDataset {
            cutoff_day,
            entries: Vec::new(),
        }
    }

    /// Push an entry, deriving its observed flag from the cutoff.
    pub fn push(
        &mut self,
        context: ContextVector,
        fhat: f64,
        action: Action,
        reward: u8,
        delay_days: u32,
        arrival_day: u32,
    ) {
        let observed = arrival_day + delay_days <= self.cutoff_day;
        self.entries.push(LoggedEntry {
            context,
            fhat,
            action,
            reward,
            delay_days,
            arrival_day,
            observed,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The only view policies may train on.
    pub fn observed(&self) -> impl Iterator<Item = &LoggedEntry> {
        self.entries.iter().filter(|e| e.observed)
    }

    pub fn observed_samples(&self) -> Vec<Observation> {
        self.observed()
            .map(|e| Observation {
                context: e.context.clone(),
                fhat: e.fhat,
                action: e.action,
                reward: e.reward,
            })
            .collect()
    }
}

/// A reward outcome that has become visible to a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub context: ContextVector,
    pub fhat: f64,
    pub action: Action,
    pub reward: u8,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_boundaries_are_strict() {
        assert_eq!(FhatBucket::of(9.999), FhatBucket::Low);
        assert_eq!(FhatBucket::of(10.0), FhatBucket::Mid);
        assert_eq!(FhatBucket::of(20.0), FhatBucket::Mid);
        assert_eq!(FhatBucket::of(20.0001), FhatBucket::High);
    }

    #[test]
    fn argmax_prefers_canonical_order_on_ties() {
        assert_eq!(argmax_action([1.0, 1.0, 1.0]), Action::A);
        assert_eq!(argmax_action([0.1, 0.4, 0.4]), Action::B);
        assert_eq!(argmax_action([0.1, 0.4, 0.2]), Action::B);
    }

    #[test]
    fn logged_dataset_hides_pending_entries() {
        let mut ds = LoggedDataset::new(90);
        ds.push(ContextVector(vec![0.0]), 1.0, Action::A, 1, 0, 90);
        ds.push(ContextVector(vec![0.0]), 1.0, Action::B, 1, 1, 90);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.observed().count(), 1);
        assert!(ds.entries[0].observed);
        assert!(!ds.entries[1].observed);
    }

    #[test]
    fn reward_event_observe_day() {
        let e = RewardEvent::new(1, Action::C, 1, 95, 10);
        assert_eq!(e.observe_day, 105);
    }
}
