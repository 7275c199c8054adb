use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Problem};
use crate::error::{Error, Result};
use crate::estimator::GradientEstimator;
use crate::policy::Architecture;
use crate::variance_reduction::{SgConfig, SvrpgConfig, VariantFlags, DEFAULT_WEIGHT_LOG_CAP};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_VAR: &str = "SVRPG_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Reinforce,
    Gpomdp,
    Svrpg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Reinforce => "reinforce",
            Algorithm::Gpomdp => "gpomdp",
            Algorithm::Svrpg => "svrpg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_eval_seed")]
    pub seed: u64,
    /// Success threshold on the average return; derived from the
    /// environment when absent.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_rollouts() -> usize {
    20
}

fn default_eval_seed() -> u64 {
    0x0e7a1
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { rollouts: default_rollouts(), seed: default_eval_seed(), threshold: None }
    }
}

/// One experiment: an algorithm on an environment over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in plot data; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    pub environment: String,
    pub horizon: usize,
    pub gamma: f64,
    pub policy: Architecture,
    pub algorithm: Algorithm,
    pub eta: f64,
    /// `N` for SVRPG, the batch size for the plain methods.
    pub batch_size: usize,
    /// `B`, SVRPG only.
    #[serde(default)]
    pub mini_batch_size: Option<usize>,
    /// `m`, SVRPG only.
    #[serde(default)]
    pub epoch_length: Option<usize>,
    #[serde(default)]
    pub eta_inner: Option<f64>,
    #[serde(default)]
    pub flags: VariantFlags,
    /// Estimator inside SVRPG; the plain methods use their own.
    #[serde(default)]
    pub estimator: Option<GradientEstimator>,
    #[serde(default = "default_log_cap")]
    pub weight_log_cap: f64,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_log_cap() -> f64 {
    DEFAULT_WEIGHT_LOG_CAP
}

impl RunConfig {
    pub fn from_json_str(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algorithm.name().to_string())
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(Environment::from_name(&self.environment)?, self.horizon, self.gamma)
    }

    /// Cheapest possible first update, in trajectories.
    pub fn first_update_cost(&self) -> u64 {
        match self.algorithm {
            Algorithm::Svrpg => {
                let b = if self.flags.initial_update { 0 } else { self.mini_batch_size.unwrap_or(0) };
                (self.batch_size + b) as u64
            }
            _ => self.batch_size as u64,
        }
    }

    /// Threshold from the config, else `0.9·H` on cart-pole and `0.8` on
    /// mountain car (rewards there are normalised to at most 1 per episode).
    pub fn threshold(&self) -> Option<f64> {
        self.evaluation.threshold.or(match self.environment.as_str() {
            "cartpole" => Some(0.9 * self.horizon as f64),
            "mountaincar" => Some(0.8),
            _ => None,
        })
    }

    /// Checks everything that can be checked without sampling.
    pub fn validate(&self) -> Result<Problem> {
        let problem = self.problem()?;
        self.policy.validate()?;
        let env = &problem.env;
        match (&self.policy, env) {
            (Architecture::SoftmaxTabular { num_states, num_actions }, Environment::Tabular(mdp)) => {
                if *num_states != mdp.num_states() || *num_actions != mdp.num_actions() {
                    return Err(Error::InvalidConfig("softmax policy shape differs from the MDP".into()));
                }
            }
            (Architecture::SoftmaxTabular { .. }, _) | (_, Environment::Tabular(_)) => {
                return Err(Error::InvalidConfig("tabular environments need a softmax policy and vice versa".into()));
            }
            (Architecture::GaussianLinear { state_dim, action_dim, .. }, _)
            | (Architecture::GaussianMlp { state_dim, action_dim, .. }, _) => {
                if *state_dim != env.state_dim() || *action_dim != env.action_dim() {
                    return Err(Error::InvalidConfig(format!(
                        "policy dimensions ({state_dim}, {action_dim}) differ from the environment ({}, {})",
                        env.state_dim(),
                        env.action_dim()
                    )));
                }
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.evaluation.rollouts == 0 {
            return Err(Error::InvalidConfig("evaluation needs at least one rollout".into()));
        }
        if self.algorithm == Algorithm::Svrpg && (self.mini_batch_size.is_none() || self.epoch_length.is_none()) {
            return Err(Error::InvalidConfig("svrpg needs mini_batch_size and epoch_length".into()));
        }
        // A zero budget is an explicit dry run.
        if self.budget != 0 {
            let needed = match self.algorithm {
                Algorithm::Svrpg => (self.batch_size + self.mini_batch_size.unwrap_or(0)) as u64,
                _ => self.batch_size as u64,
            };
            if self.budget < needed {
                return Err(Error::InvalidConfig(format!("budget {} is below one epoch ({needed})", self.budget)));
            }
        }
        match self.algorithm {
            Algorithm::Svrpg => self.svrpg_config(0).validate()?,
            _ => self.sg_config(0).validate()?,
        }
        Ok(problem)
    }

    pub fn svrpg_config(&self, seed: u64) -> SvrpgConfig {
        let mini = self.mini_batch_size.unwrap_or(0);
        let m = self.epoch_length.unwrap_or(0);
        // Enough epochs that the budget, not S, ends the run.
        let per_epoch = (self.batch_size + mini.max(1)) as u64;
        let epochs = (self.budget / per_epoch.max(1) + 1) as usize;
        SvrpgConfig {
            epochs,
            epoch_length: m,
            eta: self.eta,
            eta_inner: self.eta_inner,
            batch_size: self.batch_size,
            mini_batch_size: mini,
            estimator: self.estimator.clone().unwrap_or_else(GradientEstimator::gpomdp),
            flags: self.flags,
            seed,
            weight_log_cap: self.weight_log_cap,
            budget: Some(self.budget),
            record_iterates: false,
        }
    }

    pub fn sg_config(&self, seed: u64) -> SgConfig {
        let estimator = match self.algorithm {
            Algorithm::Reinforce => GradientEstimator::reinforce(),
            _ => GradientEstimator::gpomdp(),
        };
        SgConfig {
            iterations: (self.budget / self.batch_size.max(1) as u64 + 1) as usize,
            batch_size: self.batch_size,
            eta: self.eta,
            estimator,
            adaptive_step: self.flags.adaptive_step,
            seed,
            budget: Some(self.budget),
            record_iterates: false,
        }
    }

    /// `output_dir`, prefixed by the output-root variable when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

/// Built-in configurations for the cart-pole and mountain-car experiments.
pub mod presets {
    use super::*;

    fn cartpole_policy() -> Architecture {
        Architecture::GaussianMlp { state_dim: 4, action_dim: 1, hidden: 8, sigma: 2.0, input_clip: 10.0 }
    }

    fn mountaincar_policy() -> Architecture {
        Architecture::GaussianMlp { state_dim: 2, action_dim: 1, hidden: 16, sigma: 1.0, input_clip: 10.0 }
    }

    // Adaptive epochs stay off: with separate step accumulators the inner
    // rate drops below the outer one after a single inner step.
    fn practical() -> VariantFlags {
        VariantFlags { initial_update: true, adaptive_step: true, adaptive_epoch: false }
    }

    fn adaptive_only() -> VariantFlags {
        VariantFlags { initial_update: false, adaptive_step: true, adaptive_epoch: false }
    }

    fn base(environment: &str, horizon: usize, policy: Architecture, algorithm: Algorithm) -> RunConfig {
        RunConfig {
            label: None,
            environment: environment.into(),
            horizon,
            gamma: 0.99,
            policy,
            algorithm,
            eta: 0.01,
            batch_size: 10,
            mini_batch_size: None,
            epoch_length: None,
            eta_inner: None,
            flags: adaptive_only(),
            estimator: None,
            weight_log_cap: DEFAULT_WEIGHT_LOG_CAP,
            budget: 10000,
            seeds: (0..10).collect(),
            output_dir: PathBuf::from(format!("{environment}-{}", algorithm.name())),
            evaluation: EvaluationConfig::default(),
        }
    }

    /// SVRPG on cart-pole with `N = 25`, `B = 10`, `η = 0.06` and
    /// `m = ⌈√B⌉`.
    pub fn cartpole_svrpg() -> RunConfig {
        RunConfig {
            eta: 0.06,
            batch_size: 25,
            mini_batch_size: Some(10),
            epoch_length: Some(4),
            flags: practical(),
            ..base("cartpole", 200, cartpole_policy(), Algorithm::Svrpg)
        }
    }

    pub fn cartpole_gpomdp() -> RunConfig {
        RunConfig { eta: 0.01, batch_size: 10, ..base("cartpole", 200, cartpole_policy(), Algorithm::Gpomdp) }
    }

    pub fn cartpole_reinforce() -> RunConfig {
        RunConfig { eta: 0.01, batch_size: 10, ..base("cartpole", 200, cartpole_policy(), Algorithm::Reinforce) }
    }

    pub fn mountaincar_svrpg() -> RunConfig {
        RunConfig {
            eta: 0.0075,
            batch_size: 100,
            mini_batch_size: Some(20),
            epoch_length: Some(5),
            flags: practical(),
            budget: 20000,
            ..base("mountaincar", 500, mountaincar_policy(), Algorithm::Svrpg)
        }
    }

    pub fn mountaincar_gpomdp() -> RunConfig {
        RunConfig {
            eta: 0.005,
            batch_size: 20,
            budget: 20000,
            ..base("mountaincar", 500, mountaincar_policy(), Algorithm::Gpomdp)
        }
    }

    pub fn mountaincar_reinforce() -> RunConfig {
        RunConfig {
            eta: 0.0025,
            batch_size: 20,
            budget: 20000,
            ..base("mountaincar", 500, mountaincar_policy(), Algorithm::Reinforce)
        }
    }

    pub fn all() -> Vec<(&'static str, RunConfig)> {
        vec![
            ("cartpole-svrpg", cartpole_svrpg()),
            ("cartpole-gpomdp", cartpole_gpomdp()),
            ("cartpole-reinforce", cartpole_reinforce()),
            ("mountaincar-svrpg", mountaincar_svrpg()),
            ("mountaincar-gpomdp", mountaincar_gpomdp()),
            ("mountaincar-reinforce", mountaincar_reinforce()),
        ]
    }
}
