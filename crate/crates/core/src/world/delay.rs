use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Action;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::world::ReferencePool;

/// Empirical delay pools conditioned on (action, reward), resampled and
/// scaled by `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    /// Indexed by `action.index() * 2 + reward`.
    pub pools: Vec<Vec<u32>>,
    pub lambda: f64,
}

fn slot(action: Action, reward: u8) -> usize {
    action.index() * 2 + usize::from(reward.min(1))
}

impl DelayModel {
    pub fn from_pools(pools: Vec<Vec<u32>>, lambda: f64) -> Result<Self> {
        let m = DelayModel { pools, lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pools.len() != Action::COUNT * 2 {
            return Err(Error::invalid("delay model needs six (action, reward) pools"));
        }
        for a in Action::ALL {
            for r in 0..=1u8 {
                if self.pools[slot(a, r)].is_empty() {
                    return Err(Error::invalid(format!(
                        "no delay samples for action {a}, reward {r}"
                    )));
                }
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("delay scale must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn pool(&self, action: Action, reward: u8) -> &[u32] {
        &self.pools[slot(action, reward)]
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn mean(&self, action: Action, reward: u8) -> f64 {
        let p = self.pool(action, reward);
        p.iter().map(|&d| f64::from(d)).sum::<f64>() / p.len() as f64
    }
}

pub fn fit_delay_model(pool: &ReferencePool) -> Result<DelayModel> {
    let mut pools = vec![Vec::new(); Action::COUNT * 2];
    for h in pool.history.iter().flatten() {
        pools[slot(h.action, h.reward)].push(h.delay_days);
    }
    DelayModel::from_pools(pools, 1.0)
}

/// Uniform draw from the (action, reward) pool, scaled and floored.
/// Consumes exactly one random number.
pub fn sample_delay(action: Action, reward: u8, model: &DelayModel, rng: &mut SimRng) -> u32 {
    let pool = model.pool(action, reward);
    let draw = pool[rng.gen_range(0..pool.len())];
    scale_delay(draw, model.lambda)
}

pub fn scale_delay(draw: u32, lambda: f64) -> u32 {
    (lambda * f64::from(draw)).floor() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn model(lambda: f64) -> DelayModel {
        DelayModel::from_pools(
            vec![vec![3, 9], vec![7], vec![30, 31], vec![200], vec![1], vec![60, 61, 62]],
            lambda,
        )
        .unwrap()
    }

    #[test]
    fn floor_scaling() {
        assert_eq!(scale_delay(30, 0.5), 15);
        assert_eq!(scale_delay(31, 0.5), 15);
        assert_eq!(scale_delay(31, 0.0), 0);
        assert_eq!(scale_delay(31, 1.0), 31);
    }

    #[test]
    fn lambda_zero_and_one() {
        let mut rng = stream(1, Stream::Delays);
        let m0 = model(0.0);
        let m1 = model(1.0);
        for _ in 0..200 {
            for a in Action::ALL {
                for r in 0..=1 {
                    assert_eq!(sample_delay(a, r, &m0, &mut rng), 0);
                    let d = sample_delay(a, r, &m1, &mut rng);
                    assert!(m1.pool(a, r).contains(&d));
                }
            }
        }
        assert!((0..50).all(|_| sample_delay(Action::A, 1, &m1, &mut rng) == 7));
    }

    #[test]
    fn empty_pool_rejected() {
        let mut pools = vec![vec![1]; 6];
        pools[3].clear();
        assert!(DelayModel::from_pools(pools, 1.0).is_err());
        assert!(model(1.0).with_lambda(-0.5).is_err());
    }
}
