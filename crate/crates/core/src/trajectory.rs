//! Trajectories: returns, log-densities, sampling and exhaustive enumeration.
//!
//! Densities are split into a θ-dependent policy part and a θ-independent
//! environment part (`ρ(s₀)·Π P(s'|s,a)`). Importance weights and scores
//! only ever need the policy part.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Problem};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::{self, Purpose, StreamRng};
use crate::tabular::TabularMdp;

/// Largest number of candidate paths [`enumerate_trajectories`] will visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// One rollout `s₀, a₀, r₀, …, s_{H-1}, a_{H-1}, r_{H-1}[, s_H]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
}

impl Trajectory {
    /// `states` has one entry per action, optionally followed by the final
    /// state.
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if actions.len() != rewards.len() {
            return Err(Error::MalformedTrajectory(format!(
                "{} actions but {} rewards",
                actions.len(),
                rewards.len()
            )));
        }
        if states.len() != actions.len() && states.len() != actions.len() + 1 {
            return Err(Error::MalformedTrajectory(format!(
                "{} states for {} actions",
                states.len(),
                actions.len()
            )));
        }
        Ok(Trajectory { states, actions, rewards })
    }

    /// Trajectory of a tabular MDP given as indices.
    pub fn from_indices(states: &[usize], actions: &[usize], rewards: Vec<f64>) -> Result<Self> {
        Self::new(
            states.iter().map(|s| vec![*s as f64]).collect(),
            actions.iter().map(|a| vec![*a as f64]).collect(),
            rewards,
        )
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn has_terminal_state(&self) -> bool {
        self.states.len() == self.actions.len() + 1
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// `(s_h, a_h, r_h)` for `h = 0..horizon`.
    pub fn steps(&self) -> impl Iterator<Item = (&[f64], &[f64], f64)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(move |(h, a)| (self.states[h].as_slice(), a.as_slice(), self.rewards[h]))
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("discount {gamma} outside (0, 1)")))
    }
}

/// `Σ_h γ^h r_h`.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if traj.is_empty() {
        return Err(Error::DegenerateRollout);
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in traj.rewards() {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// `Σ_h log π_θ(a_h|s_h)`, the θ-dependent part of `log p(τ|θ)`.
pub fn policy_log_density(traj: &Trajectory, policy: &Policy) -> Result<f64> {
    traj.steps().map(|(s, a, _)| policy.log_prob(s, a)).sum()
}

/// `log ρ(s₀) + Σ_h log P(s_{h+1}|s_h, a_h)`. Requires the final state.
pub fn environment_log_density(traj: &Trajectory, mdp: &TabularMdp) -> Result<f64> {
    if !traj.has_terminal_state() {
        return Err(Error::MalformedTrajectory("environment density needs the final state".into()));
    }
    let states = traj
        .states()
        .iter()
        .map(|s| mdp.state_index(s))
        .collect::<Result<Vec<_>>>()?;
    let mut log_p = mdp.rho()[states[0]].ln();
    if log_p == f64::NEG_INFINITY {
        return Err(Error::ImpossibleTrajectory(format!("initial state {} has zero mass", states[0])));
    }
    for (h, a) in traj.actions().iter().enumerate() {
        let a = mdp.action_index(a)?;
        let p = mdp.transition(states[h], a, states[h + 1]);
        if p == 0.0 {
            return Err(Error::ImpossibleTrajectory(format!(
                "transition {} -[{a}]-> {} has probability 0",
                states[h],
                states[h + 1]
            )));
        }
        log_p += p.ln();
    }
    Ok(log_p)
}

/// Roll out `policy` for at most `horizon` steps; stops early when the
/// environment terminates. The final state is kept.
pub fn sample_trajectory(
    env: &Environment,
    policy: &Policy,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut state = env.reset(rng);
    for _ in 0..horizon {
        let action = policy.sample_action(&state, rng)?;
        let outcome = env.step(&state, &action, rng)?;
        states.push(std::mem::replace(&mut state, outcome.next_state));
        actions.push(action);
        rewards.push(outcome.reward);
        if outcome.terminated {
            break;
        }
    }
    states.push(state);
    Trajectory::new(states, actions, rewards)
}

/// Sample `n` trajectories, each from its own stream
/// `(seed, purpose, epoch, iter, index)`. Parallel, but bit-identical to a
/// serial loop.
pub fn sample_batch(
    problem: &Problem,
    policy: &Policy,
    n: usize,
    seed: u64,
    purpose: Purpose,
    epoch: u64,
    iter: u64,
) -> Result<Vec<Trajectory>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, purpose, epoch, iter, i);
            sample_trajectory(&problem.env, policy, problem.horizon, &mut rng)
        })
        .collect()
}

/// Every trajectory the environment can produce, with its environment
/// log-density. Paths through zero-probability transitions are pruned;
/// policy probabilities are not considered.
pub fn enumerate_paths(mdp: &TabularMdp) -> Result<Vec<(Trajectory, f64)>> {
    let (ns, na, h) = (mdp.num_states() as f64, mdp.num_actions() as f64, mdp.horizon() as i32);
    let terms = ns.powi(h + 1) * na.powi(h);
    if terms > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { terms, limit: ENUMERATION_LIMIT });
    }
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(mdp.horizon() + 1);
    let mut actions = Vec::with_capacity(mdp.horizon());
    for s0 in 0..mdp.num_states() {
        let p0 = mdp.rho()[s0];
        if p0 > 0.0 {
            states.push(s0);
            extend_paths(mdp, &mut states, &mut actions, p0.ln(), &mut out)?;
            states.pop();
        }
    }
    Ok(out)
}

fn extend_paths(
    mdp: &TabularMdp,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    log_p: f64,
    out: &mut Vec<(Trajectory, f64)>,
) -> Result<()> {
    if actions.len() == mdp.horizon() {
        let rewards = states.iter().zip(actions.iter()).map(|(s, a)| mdp.reward(*s, *a)).collect();
        out.push((Trajectory::from_indices(states, actions, rewards)?, log_p));
        return Ok(());
    }
    let s = *states.last().expect("path starts with a state");
    for a in 0..mdp.num_actions() {
        for next in 0..mdp.num_states() {
            let p = mdp.transition(s, a, next);
            if p > 0.0 {
                actions.push(a);
                states.push(next);
                extend_paths(mdp, states, actions, log_p + p.ln(), out)?;
                states.pop();
                actions.pop();
            }
        }
    }
    Ok(())
}

/// All trajectories with positive probability under `policy` on `mdp`,
/// paired with `p(τ|θ)`.
pub fn enumerate_trajectories(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<(Trajectory, f64)>> {
    let mut out = Vec::new();
    for (traj, env_log) in enumerate_paths(mdp)? {
        let mut pol_log = 0.0;
        for (s, a, _) in traj.steps() {
            pol_log += policy.log_density(s, a)?;
        }
        if pol_log > f64::NEG_INFINITY {
            out.push((traj, (env_log + pol_log).exp()));
        }
    }
    Ok(out)
}
