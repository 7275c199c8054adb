//! Simulators: continuous cart-pole, continuous mountain car, tabular MDPs.
//!
//! Environments are immutable parameter bundles. `reset` and `step` take the
//! state explicitly, so any number of rollouts can share one environment.

mod cartpole;
mod mountain_car;

pub use cartpole::CartPole;
pub use mountain_car::MountainCar;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tabular::TabularMdp;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    CartPole(CartPole),
    MountainCar(MountainCar),
    Tabular(TabularMdp),
}

impl Environment {
    /// Resolve `"cartpole"`, `"mountaincar"` or `"tabular:<path>"`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cartpole" => Ok(Environment::CartPole(CartPole::default())),
            "mountaincar" => Ok(Environment::MountainCar(MountainCar::default())),
            "tabular:oracle" => Ok(Environment::Tabular(TabularMdp::oracle())),
            other => match other.strip_prefix("tabular:") {
                Some(path) => Ok(Environment::Tabular(TabularMdp::from_path(path)?)),
                None => Err(Error::InvalidConfig(format!("unknown environment {other:?}"))),
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Environment::CartPole(_) => 4,
            Environment::MountainCar(_) => 2,
            Environment::Tabular(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Environment::CartPole(_) | Environment::MountainCar(_) | Environment::Tabular(_) => 1,
        }
    }

    /// Per-dimension action interval; tabular actions are indices.
    pub fn action_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Environment::CartPole(c) => vec![(-c.force_mag, c.force_mag)],
            Environment::MountainCar(_) => vec![(-1.0, 1.0)],
            Environment::Tabular(m) => vec![(0.0, (m.num_actions() - 1) as f64)],
        }
    }

    /// Upper bound `R` on any single reward.
    pub fn max_reward(&self) -> f64 {
        match self {
            Environment::CartPole(_) | Environment::MountainCar(_) => 1.0,
            Environment::Tabular(m) => m.max_reward(),
        }
    }

    pub fn as_tabular(&self) -> Option<&TabularMdp> {
        match self {
            Environment::Tabular(m) => Some(m),
            _ => None,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Environment::CartPole(c) => c.reset(rng).to_vec(),
            Environment::MountainCar(m) => m.reset(rng).to_vec(),
            Environment::Tabular(m) => vec![m.sample_initial(rng) as f64],
        }
    }

    /// Physics environments ignore `rng`; tabular transitions draw from it.
    pub fn step<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Result<StepOutcome> {
        if !state.iter().chain(action).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("step input state {state:?} action {action:?}")));
        }
        match self {
            Environment::CartPole(c) => {
                let s = fixed::<4>(state, "cart-pole state")?;
                let (next, terminated) = c.step(&s, action[0]);
                Ok(StepOutcome { next_state: next.to_vec(), reward: 1.0, terminated })
            }
            Environment::MountainCar(m) => {
                let s = fixed::<2>(state, "mountain-car state")?;
                let (next, reward, terminated) = m.step(&s, action[0]);
                Ok(StepOutcome { next_state: next.to_vec(), reward, terminated })
            }
            Environment::Tabular(m) => {
                let s = m.state_index(state)?;
                let a = m.action_index(action)?;
                let next = m.sample_next(s, a, rng);
                Ok(StepOutcome { next_state: vec![next as f64], reward: m.reward(s, a), terminated: false })
            }
        }
    }
}

fn fixed<const N: usize>(v: &[f64], what: &str) -> Result<[f64; N]> {
    v.try_into()
        .map_err(|_| Error::InvalidArgument(format!("{what} must have {N} entries, got {}", v.len())))
}

/// An environment together with the rollout horizon and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub env: Environment,
    pub horizon: usize,
    pub gamma: f64,
}

impl Problem {
    pub fn new(env: Environment, horizon: usize, gamma: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside (0, 1)")));
        }
        Ok(Problem { env, horizon, gamma })
    }

    /// Uses the MDP's own horizon and discount.
    pub fn tabular(mdp: TabularMdp) -> Self {
        let (horizon, gamma) = (mdp.horizon(), mdp.gamma());
        Problem { env: Environment::Tabular(mdp), horizon, gamma }
    }
}
