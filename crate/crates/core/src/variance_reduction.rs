//! Importance weights, the semi-stochastic gradient and the training loops.
//!
//! [`svrpg_run`] follows the epoch structure of SVRPG: a snapshot gradient
//! `μ` from `N` trajectories at the reference point, then up to `m` inner
//! ascent steps along
//!
//! ```text
//! v = μ + (1/B) Σ_j [ g(τ_j|θ) − ω(τ_j|θ̃, θ)·g(τ_j|θ̃) ]
//! ```
//!
//! with `τ_j` drawn under the current `θ`. [`sg_run`] is the plain
//! stochastic-gradient baseline (REINFORCE or GPOMDP).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Problem;
use crate::error::{Error, Result};
use crate::estimator::{batch_grad, per_trajectory_grads, GradientEstimator};
use crate::linalg::{all_finite, norm, pairwise_mean, pairwise_sum_scalars};
use crate::policy::Policy;
use crate::rng::{self, Purpose, StreamRng};
use crate::trajectory::{policy_log_density, sample_batch, Trajectory};

/// Default cap on `log ω`.
pub const DEFAULT_WEIGHT_LOG_CAP: f64 = 13.815_510_557_964_274; // ln(1e6)

const ADAGRAD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceWeight {
    pub value: f64,
    pub log_ratio: f64,
    pub clipped: bool,
}

/// `ω(τ|θ̃, θ) = p(τ|θ̃)/p(τ|θ)` from policy log-densities only (the initial
/// state and transition factors cancel). Ratios above `exp(log_cap)` are
/// clipped and flagged.
pub fn importance_weight(
    traj: &Trajectory,
    reference: &Policy,
    current: &Policy,
    log_cap: f64,
) -> Result<ImportanceWeight> {
    let log_ratio = policy_log_density(traj, reference)? - policy_log_density(traj, current)?;
    if log_ratio.is_nan() {
        return Err(Error::NonFinite("importance log-ratio".into()));
    }
    let clipped = log_ratio > log_cap;
    let value = if clipped { log_cap.exp() } else { log_ratio.exp() };
    Ok(ImportanceWeight { value, log_ratio, clipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiStochasticGradient {
    pub grad: Vec<f64>,
    pub clip_count: usize,
}

/// Semi-stochastic gradient `v` for a mini-batch sampled under `current`.
pub fn semi_stochastic_grad(
    mu: &[f64],
    minibatch: &[Trajectory],
    reference: &Policy,
    current: &Policy,
    estimator: &GradientEstimator,
    gamma: f64,
    log_cap: f64,
) -> Result<SemiStochasticGradient> {
    if minibatch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if mu.len() != current.dim() || reference.dim() != current.dim() {
        return Err(Error::InvalidArgument("snapshot gradient and policies differ in dimension".into()));
    }
    let g_cur = per_trajectory_grads(minibatch, current, estimator, gamma)?;
    let g_ref = per_trajectory_grads(minibatch, reference, estimator, gamma)?;
    let mut clip_count = 0;
    let mut corrections = Vec::with_capacity(minibatch.len());
    for ((traj, gc), gr) in minibatch.iter().zip(&g_cur).zip(&g_ref) {
        let w = importance_weight(traj, reference, current, log_cap)?;
        clip_count += usize::from(w.clipped);
        corrections.push(gc.iter().zip(gr).map(|(a, b)| a - w.value * b).collect::<Vec<f64>>());
    }
    let correction = pairwise_mean(&corrections).expect("non-empty mini-batch");
    let grad = mu.iter().zip(&correction).map(|(m, c)| m + c).collect();
    Ok(SemiStochasticGradient { grad, clip_count })
}

/// Practical modifications to the plain algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantFlags {
    /// Take one step along `μ` right after the snapshot.
    pub initial_update: bool,
    /// Per-parameter accumulated-squared-gradient step scaling.
    pub adaptive_step: bool,
    /// Leave the inner loop once its effective step falls below the outer one.
    pub adaptive_epoch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrpgConfig {
    /// `S`
    pub epochs: usize,
    /// `m`
    pub epoch_length: usize,
    pub eta: f64,
    /// Inner-loop step size; defaults to `eta`.
    #[serde(default)]
    pub eta_inner: Option<f64>,
    /// `N`
    pub batch_size: usize,
    /// `B`
    pub mini_batch_size: usize,
    pub estimator: GradientEstimator,
    #[serde(default)]
    pub flags: VariantFlags,
    pub seed: u64,
    #[serde(default = "default_log_cap")]
    pub weight_log_cap: f64,
    /// Stop before any batch that would exceed this many trajectories.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub record_iterates: bool,
}

fn default_log_cap() -> f64 {
    DEFAULT_WEIGHT_LOG_CAP
}

impl SvrpgConfig {
    pub fn new(epochs: usize, epoch_length: usize, eta: f64, batch_size: usize, mini_batch_size: usize) -> Self {
        SvrpgConfig {
            epochs,
            epoch_length,
            eta,
            eta_inner: None,
            batch_size,
            mini_batch_size,
            estimator: GradientEstimator::gpomdp(),
            flags: VariantFlags::default(),
            seed: 0,
            weight_log_cap: DEFAULT_WEIGHT_LOG_CAP,
            budget: None,
            record_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.epoch_length == 0 || self.batch_size == 0 || self.mini_batch_size == 0 {
            return Err(Error::InvalidConfig("S, m, N and B must all be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {} must be positive", self.eta)));
        }
        if let Some(e) = self.eta_inner {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::InvalidConfig(format!("inner step size {e} must be non-negative")));
            }
        }
        if !(self.weight_log_cap > 0.0) {
            return Err(Error::InvalidConfig("weight_log_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Plain stochastic-gradient ascent configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub estimator: GradientEstimator,
    #[serde(default)]
    pub adaptive_step: bool,
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub record_iterates: bool,
}

impl SgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("iterations and batch size must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {} must be positive", self.eta)));
        }
        Ok(())
    }
}

/// One row per parameter update (plus the starting point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub iter: usize,
    pub trajectories_consumed: u64,
    pub avg_return: f64,
    pub grad_norm_proxy: f64,
    pub weight_clip_count: usize,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub final_policy: Policy,
    /// Iterate drawn uniformly from every recorded iterate.
    pub uniform_iterate: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub trajectories_consumed: u64,
    pub epochs_run: usize,
    pub inner_steps: usize,
    pub clip_count: u64,
}

/// Measures a policy during training, typically by rollouts.
pub trait Evaluator {
    fn average_return(&mut self, policy: &Policy) -> Result<f64>;
}

impl<F: FnMut(&Policy) -> Result<f64>> Evaluator for F {
    fn average_return(&mut self, policy: &Policy) -> Result<f64> {
        self(policy)
    }
}

/// Records `NaN` for every checkpoint.
pub struct NoEvaluation;

impl Evaluator for NoEvaluation {
    fn average_return(&mut self, _: &Policy) -> Result<f64> {
        Ok(f64::NAN)
    }
}

/// Mean undiscounted return over a fixed set of evaluation rollouts. The
/// same streams are reused at every checkpoint.
pub struct RolloutEvaluator<'a> {
    pub problem: &'a Problem,
    pub rollouts: usize,
    pub seed: u64,
}

impl Evaluator for RolloutEvaluator<'_> {
    fn average_return(&mut self, policy: &Policy) -> Result<f64> {
        let trajs = sample_batch(self.problem, policy, self.rollouts, self.seed, Purpose::Evaluation, 0, 0)?;
        let totals: Vec<f64> = trajs.iter().map(Trajectory::total_reward).collect();
        Ok(pairwise_sum_scalars(&totals) / totals.len() as f64)
    }
}

/// Constant or accumulated-squared-gradient step rule.
#[derive(Debug, Clone)]
struct StepRule {
    eta: f64,
    adaptive: bool,
    accum: Vec<f64>,
    last_rate: Option<f64>,
}

impl StepRule {
    fn new(eta: f64, adaptive: bool, dim: usize) -> Self {
        StepRule { eta, adaptive, accum: vec![0.0; dim], last_rate: None }
    }

    /// Applies one ascent step in place; returns the effective step size
    /// (mean per-parameter rate).
    fn ascend(&mut self, theta: &mut [f64], direction: &[f64]) -> f64 {
        let rate = if self.adaptive {
            let mut total = 0.0;
            for ((t, d), acc) in theta.iter_mut().zip(direction).zip(self.accum.iter_mut()) {
                *acc += d * d;
                let r = self.eta / (acc.sqrt() + ADAGRAD_EPSILON);
                *t += r * d;
                total += r;
            }
            total / theta.len() as f64
        } else {
            theta.iter_mut().zip(direction).for_each(|(t, d)| *t += self.eta * d);
            self.eta
        };
        self.last_rate = Some(rate);
        rate
    }
}

/// Uniform choice among a stream of iterates, one slot of memory.
struct IteratePicker {
    rng: StreamRng,
    seen: u64,
    chosen: Vec<f64>,
    all: Option<Vec<Vec<f64>>>,
}

impl IteratePicker {
    fn new(seed: u64, record: bool) -> Self {
        IteratePicker {
            rng: rng::stream(seed, Purpose::IteratePick, 0, 0, 0),
            seen: 0,
            chosen: Vec::new(),
            all: record.then(Vec::new),
        }
    }

    fn offer(&mut self, theta: &[f64]) {
        self.seen += 1;
        if self.rng.random_range(0..self.seen) == 0 {
            self.chosen = theta.to_vec();
        }
        if let Some(all) = self.all.as_mut() {
            all.push(theta.to_vec());
        }
    }
}

fn ensure_finite(theta: &[f64], epoch: usize, iter: usize) -> Result<()> {
    if all_finite(theta) {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, iter, dump: format!("{theta:?}") })
    }
}

fn fits(budget: Option<u64>, consumed: u64, extra: usize) -> bool {
    budget.is_none_or(|b| consumed + extra as u64 <= b)
}

/// Run SVRPG from `initial`. Rows are recorded after every parameter update.
pub fn svrpg_run(
    config: &SvrpgConfig,
    problem: &Problem,
    initial: &Policy,
    evaluator: &mut dyn Evaluator,
) -> Result<RunOutput> {
    config.validate()?;
    let flags = config.flags;
    let d = initial.dim();
    let mut theta = initial.theta().to_vec();
    let mut outer = StepRule::new(config.eta, flags.adaptive_step, d);
    let mut inner = StepRule::new(config.eta_inner.unwrap_or(config.eta), flags.adaptive_step, d);
    let mut picker = IteratePicker::new(config.seed, config.record_iterates);
    let mut rows = Vec::new();
    let mut consumed = 0u64;
    let mut inner_steps = 0usize;
    let mut epochs_run = 0usize;
    let mut clip_total = 0u64;

    picker.offer(&theta);
    if config.budget != Some(0) {
        rows.push(MetricsRow {
            epoch: 0,
            iter: 0,
            trajectories_consumed: 0,
            avg_return: evaluator.average_return(initial)?,
            grad_norm_proxy: 0.0,
            weight_clip_count: 0,
            step_size: 0.0,
        });
    }

    'epochs: for s in 0..config.epochs {
        let first_cost = config.batch_size + if flags.initial_update { 0 } else { config.mini_batch_size };
        if !fits(config.budget, consumed, first_cost) {
            break;
        }
        epochs_run += 1;
        let reference = initial.with_theta(theta.clone())?;
        let snapshot =
            sample_batch(problem, &reference, config.batch_size, config.seed, Purpose::Snapshot, s as u64, 0)?;
        consumed += config.batch_size as u64;
        let mu = batch_grad(&snapshot, &reference, &config.estimator, problem.gamma)?.grad;
        picker.offer(&theta);

        let outer_rate = if flags.initial_update {
            let rate = outer.ascend(&mut theta, &mu);
            ensure_finite(&theta, s, 0)?;
            rows.push(MetricsRow {
                epoch: s,
                iter: 0,
                trajectories_consumed: consumed,
                avg_return: evaluator.average_return(&initial.with_theta(theta.clone())?)?,
                grad_norm_proxy: norm(&mu),
                weight_clip_count: 0,
                step_size: rate,
            });
            picker.offer(&theta);
            rate
        } else {
            outer.last_rate.unwrap_or(config.eta)
        };

        for t in 0..config.epoch_length {
            if !fits(config.budget, consumed, config.mini_batch_size) {
                break 'epochs;
            }
            let current = initial.with_theta(theta.clone())?;
            let minibatch = sample_batch(
                problem,
                &current,
                config.mini_batch_size,
                config.seed,
                Purpose::Inner,
                s as u64,
                t as u64,
            )?;
            consumed += config.mini_batch_size as u64;
            let v = semi_stochastic_grad(
                &mu,
                &minibatch,
                &reference,
                &current,
                &config.estimator,
                problem.gamma,
                config.weight_log_cap,
            )?;
            clip_total += v.clip_count as u64;
            let rate = inner.ascend(&mut theta, &v.grad);
            ensure_finite(&theta, s, t + 1)?;
            inner_steps += 1;
            rows.push(MetricsRow {
                epoch: s,
                iter: t + 1,
                trajectories_consumed: consumed,
                avg_return: evaluator.average_return(&initial.with_theta(theta.clone())?)?,
                grad_norm_proxy: norm(&v.grad),
                weight_clip_count: v.clip_count,
                step_size: rate,
            });
            picker.offer(&theta);
            if flags.adaptive_epoch && rate < outer_rate {
                break;
            }
        }
    }

    Ok(RunOutput {
        rows,
        final_policy: initial.with_theta(theta)?,
        uniform_iterate: picker.chosen,
        iterates: picker.all.unwrap_or_default(),
        trajectories_consumed: consumed,
        epochs_run,
        inner_steps,
        clip_count: clip_total,
    })
}

/// Plain stochastic-gradient ascent `θ ← θ + η·ĝ_N`. Batch `k` uses the
/// same streams as SVRPG's snapshot of epoch `k`.
pub fn sg_run(
    config: &SgConfig,
    problem: &Problem,
    initial: &Policy,
    evaluator: &mut dyn Evaluator,
) -> Result<RunOutput> {
    config.validate()?;
    let mut theta = initial.theta().to_vec();
    let mut rule = StepRule::new(config.eta, config.adaptive_step, theta.len());
    let mut picker = IteratePicker::new(config.seed, config.record_iterates);
    let mut rows = Vec::new();
    let mut consumed = 0u64;
    let mut updates = 0usize;

    picker.offer(&theta);
    if config.budget != Some(0) {
        rows.push(MetricsRow {
            epoch: 0,
            iter: 0,
            trajectories_consumed: 0,
            avg_return: evaluator.average_return(initial)?,
            grad_norm_proxy: 0.0,
            weight_clip_count: 0,
            step_size: 0.0,
        });
    }
    for k in 0..config.iterations {
        if !fits(config.budget, consumed, config.batch_size) {
            break;
        }
        let current = initial.with_theta(theta.clone())?;
        let batch = sample_batch(problem, &current, config.batch_size, config.seed, Purpose::Snapshot, k as u64, 0)?;
        consumed += config.batch_size as u64;
        let g = batch_grad(&batch, &current, &config.estimator, problem.gamma)?.grad;
        let rate = rule.ascend(&mut theta, &g);
        ensure_finite(&theta, 0, k + 1)?;
        updates += 1;
        rows.push(MetricsRow {
            epoch: 0,
            iter: k + 1,
            trajectories_consumed: consumed,
            avg_return: evaluator.average_return(&initial.with_theta(theta.clone())?)?,
            grad_norm_proxy: norm(&g),
            weight_clip_count: 0,
            step_size: rate,
        });
        picker.offer(&theta);
    }
    Ok(RunOutput {
        rows,
        final_policy: initial.with_theta(theta)?,
        uniform_iterate: picker.chosen,
        iterates: picker.all.unwrap_or_default(),
        trajectories_consumed: consumed,
        epochs_run: updates,
        inner_steps: 0,
        clip_count: 0,
    })
}
