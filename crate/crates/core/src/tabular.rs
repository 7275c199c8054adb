//! Finite MDPs small enough to enumerate exactly.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

const ROW_TOLERANCE: f64 = 1e-12;

/// A fully specified finite MDP `{S, A, P, R, gamma, rho}` with horizon `H`.
///
/// `transition[s][a][s']` is `P(s'|s, a)`, `rewards[s][a]` is `R(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    rho: Vec<f64>,
    gamma: f64,
    horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct RawMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    rho: Vec<f64>,
    gamma: f64,
    horizon: usize,
}

impl TryFrom<RawMdp> for TabularMdp {
    type Error = Error;

    fn try_from(raw: RawMdp) -> Result<Self> {
        TabularMdp::new(
            raw.num_states,
            raw.num_actions,
            raw.transition,
            raw.rewards,
            raw.rho,
            raw.gamma,
            raw.horizon,
        )
    }
}

impl From<TabularMdp> for RawMdp {
    fn from(m: TabularMdp) -> Self {
        RawMdp {
            num_states: m.num_states,
            num_actions: m.num_actions,
            transition: m.transition,
            rewards: m.rewards,
            rho: m.rho,
            gamma: m.gamma,
            horizon: m.horizon,
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidMdp(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidMdp(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        rho: Vec<f64>,
        gamma: f64,
        horizon: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidMdp(
                "num_states, num_actions and horizon must be positive".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} outside (0, 1)")));
        }
        if transition.len() != num_states || rewards.len() != num_states || rho.len() != num_states {
            return Err(Error::InvalidMdp("table sizes do not match num_states".into()));
        }
        for (s, (rows, rs)) in transition.iter().zip(&rewards).enumerate() {
            if rows.len() != num_actions || rs.len() != num_actions {
                return Err(Error::InvalidMdp(format!("state {s}: tables do not match num_actions")));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::InvalidMdp(format!("transition row ({s},{a}) has wrong length")));
                }
                check_distribution(row, &format!("transition row ({s},{a})"))?;
            }
            if rs.iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::InvalidMdp(format!("state {s}: rewards must be finite and >= 0")));
            }
        }
        check_distribution(&rho, "initial distribution")?;
        Ok(TabularMdp { num_states, num_actions, transition, rewards, rho, gamma, horizon })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Random MDP with strictly positive transitions, rewards in `[0, 1]`.
    pub fn random(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed, Purpose::Misc, 0, 0, 0);
        let mut simplex = |n: usize| {
            let raw: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            // Absorb rounding in the last entry so rows sum to 1 tightly.
            let head: f64 = p[..n - 1].iter().sum();
            p[n - 1] = 1.0 - head;
            p
        };
        let transition = (0..num_states)
            .map(|_| (0..num_actions).map(|_| simplex(num_states)).collect())
            .collect();
        let rho = simplex(num_states);
        let mut rng = rng::stream(seed, Purpose::Misc, 0, 0, 1);
        let rewards = (0..num_states)
            .map(|_| (0..num_actions).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self::new(num_states, num_actions, transition, rewards, rho, gamma, horizon)
    }

    /// The default 3-state, 2-action, horizon-3 oracle MDP.
    pub fn oracle() -> Self {
        Self::random(3, 2, 3, 0.9, 0x5eed_0123).expect("oracle MDP is valid by construction")
    }

    /// Single-state, single-step bandit with the given per-arm rewards.
    pub fn bandit(arm_rewards: &[f64], gamma: f64) -> Result<Self> {
        let k = arm_rewards.len();
        Self::new(1, k, vec![vec![vec![1.0]; k]], vec![arm_rewards.to_vec()], vec![1.0], gamma, 1)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[s][a][next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }

    /// Largest reward entry, the `R` of the reward bound `[0, R]`.
    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().flatten().cloned().fold(0.0, f64::max)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidMdp("horizon must be positive".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.rho, rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[s][a], rng)
    }

    pub fn state_index(&self, state: &[f64]) -> Result<usize> {
        discrete_index(state, self.num_states, "state")
    }

    pub fn action_index(&self, action: &[f64]) -> Result<usize> {
        discrete_index(action, self.num_actions, "action")
    }
}

/// Inverse-CDF draw; falls back to the last positive entry on rounding.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|v| *v > 0.0).unwrap_or(p.len() - 1)
}

pub(crate) fn discrete_index(v: &[f64], n: usize, what: &str) -> Result<usize> {
    match v {
        [x] if x.fract() == 0.0 && *x >= 0.0 && (*x as usize) < n => Ok(*x as usize),
        _ => Err(Error::InvalidArgument(format!("{what} {v:?} is not an index below {n}"))),
    }
}
