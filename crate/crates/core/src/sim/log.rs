//! Delimited-text event/decision log for a simulation result.
//!
//! ```text
//! # salesim-result v1
//! # policy=lin_ucb
//! # horizon_days=365
//! # cumulative_reward=1234
//! # daily_rewards=0;0;3;...
//! lead_id,arrival_day,action,reward,delay_days,observe_day,observed
//! 1,1,A,0,12,13,1
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::{EventRecord, SimulationResult};

const MAGIC: &str = "# salesim-result v1";
const HEADER: &str = "lead_id,arrival_day,action,reward,delay_days,observe_day,observed";

pub fn write_result_log(result: &SimulationResult) -> String {
    let mut out = String::with_capacity(64 + result.events.len() * 24);
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "# policy={}", result.policy);
    let _ = writeln!(out, "# horizon_days={}", result.horizon_days);
    let _ = writeln!(out, "# cumulative_reward={}", result.cumulative_reward);
    let daily: Vec<String> = result.daily_rewards.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "# daily_rewards={}", daily.join(";"));
    out.push_str(HEADER);
    out.push('\n');
    for e in &result.events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.lead_id,
            e.arrival_day,
            e.action,
            e.reward,
            e.delay_days,
            e.observe_day,
            u8::from(e.observed)
        );
    }
    out
}

fn field<T: std::str::FromStr>(value: Option<&str>, name: &str, loc: &str) -> Result<T> {
    value
        .ok_or_else(|| Error::parse(loc, format!("missing `{name}`")))?
        .trim()
        .parse()
        .map_err(|_| Error::parse(loc, format!("invalid `{name}`")))
}

pub fn read_result_log(text: &str, origin: &str) -> Result<SimulationResult> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::parse(origin, "not a salesim result log")),
    }
    let mut policy = None;
    let mut horizon = None;
    let mut cumulative = None;
    let mut daily = None;
    let mut events = Vec::new();
    let mut saw_header = false;
    for (i, line) in lines {
        let loc = format!("{origin}:{}", i + 1);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::parse(&loc, "metadata must be `key=value`"))?;
            match k.trim() {
                "policy" => policy = Some(v.trim().to_string()),
                "horizon_days" => horizon = Some(field::<u32>(Some(v), k, &loc)?),
                "cumulative_reward" => cumulative = Some(field::<u64>(Some(v), k, &loc)?),
                "daily_rewards" => {
                    let v = v.trim();
                    daily = Some(if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(';')
                            .map(|s| field::<u64>(Some(s), k, &loc))
                            .collect::<Result<Vec<_>>>()?
                    });
                }
                other => return Err(Error::parse(&loc, format!("unknown metadata key `{other}`"))),
            }
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(Error::parse(&loc, "expected the column header"));
            }
            saw_header = true;
            continue;
        }
        let mut cols = line.split(',');
        let lead_id = field(cols.next(), "lead_id", &loc)?;
        let arrival_day = field(cols.next(), "arrival_day", &loc)?;
        let action = field(cols.next(), "action", &loc)?;
        let reward = field(cols.next(), "reward", &loc)?;
        let delay_days = field(cols.next(), "delay_days", &loc)?;
        let observe_day = field(cols.next(), "observe_day", &loc)?;
        let observed: u8 = field(cols.next(), "observed", &loc)?;
        if cols.next().is_some() || observed > 1 {
            return Err(Error::parse(&loc, "malformed event row"));
        }
        events.push(EventRecord {
            lead_id,
            arrival_day,
            action,
            reward,
            delay_days,
            observe_day,
            observed: observed == 1,
        });
    }
    let horizon_days = horizon.ok_or_else(|| Error::parse(origin, "missing horizon_days"))?;
    Ok(SimulationResult {
        policy: policy.unwrap_or_default(),
        horizon_days,
        daily_rewards: daily.ok_or_else(|| Error::parse(origin, "missing daily_rewards"))?,
        cumulative_reward: cumulative.ok_or_else(|| Error::parse(origin, "missing cumulative_reward"))?,
        events,
        observations: Vec::new(),
        counterfactuals: Vec::new(),
        warm_start_observations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Action;
    use crate::sim::replay_verify;

    fn sample() -> SimulationResult {
        SimulationResult {
            policy: "rule_based".into(),
            horizon_days: 3,
            daily_rewards: vec![0, 1, 0],
            cumulative_reward: 1,
            events: vec![
                EventRecord {
                    lead_id: 1,
                    arrival_day: 1,
                    action: Action::A,
                    reward: 1,
                    delay_days: 1,
                    observe_day: 2,
                    observed: true,
                },
                EventRecord {
                    lead_id: 2,
                    arrival_day: 3,
                    action: Action::B,
                    reward: 1,
                    delay_days: 9,
                    observe_day: 12,
                    observed: false,
                },
            ],
            observations: vec![],
            counterfactuals: vec![],
            warm_start_observations: 0,
        }
    }

    #[test]
    fn round_trip() {
        let r = sample();
        let text = write_result_log(&r);
        let back = read_result_log(&text, "mem").unwrap();
        assert_eq!(back, r);
        replay_verify(&back).unwrap();
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_result_log("hello", "mem").is_err());
        let text = write_result_log(&sample()).replace("1,1,A,1,1,2,1", "1,1,Q,1,1,2,1");
        assert!(read_result_log(&text, "mem").is_err());
    }
}
