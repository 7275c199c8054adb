//! REINFORCE and GPOMDP gradient estimators, batch averaging, and the exact
//! gradient by enumeration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_sq, pairwise_mean, pairwise_sum, pairwise_sum_scalars};
use crate::policy::Policy;
use crate::tabular::TabularMdp;
use crate::trajectory::{discounted_return, enumerate_trajectories, Trajectory};

/// Per-step baselines `b_h` for GPOMDP.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepBaselines {
    #[default]
    Zero,
    Fixed(Vec<f64>),
    /// `b_h` = batch mean of `γ^h r_h`, resolved in [`batch_grad`].
    BatchAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum GradientEstimator {
    Reinforce {
        #[serde(default)]
        baseline: f64,
    },
    Gpomdp {
        #[serde(default)]
        baselines: StepBaselines,
    },
}

impl GradientEstimator {
    pub fn reinforce() -> Self {
        GradientEstimator::Reinforce { baseline: 0.0 }
    }

    pub fn gpomdp() -> Self {
        GradientEstimator::Gpomdp { baselines: StepBaselines::Zero }
    }

    /// `"reinforce"` or `"gpomdp"` with default (zero) baselines.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "reinforce" => Ok(Self::reinforce()),
            "gpomdp" => Ok(Self::gpomdp()),
            other => Err(Error::InvalidConfig(format!("unknown estimator {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GradientEstimator::Reinforce { .. } => "reinforce",
            GradientEstimator::Gpomdp { .. } => "gpomdp",
        }
    }

    /// Magnitude of the baseline entering the smoothness constants.
    pub fn baseline_magnitude(&self) -> f64 {
        match self {
            GradientEstimator::Reinforce { baseline } => baseline.abs(),
            GradientEstimator::Gpomdp { baselines: StepBaselines::Fixed(b) } => {
                b.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
            GradientEstimator::Gpomdp { .. } => 0.0,
        }
    }

    /// `g(τ|θ)` for one trajectory. A batch-average GPOMDP baseline is zero
    /// for a lone trajectory; use [`batch_grad`] to resolve it.
    pub fn grad(&self, traj: &Trajectory, policy: &Policy, gamma: f64) -> Result<Vec<f64>> {
        match self {
            GradientEstimator::Reinforce { baseline } => reinforce_grad(traj, policy, gamma, *baseline),
            GradientEstimator::Gpomdp { baselines: StepBaselines::Fixed(b) } => gpomdp_grad(traj, policy, gamma, b),
            GradientEstimator::Gpomdp { .. } => gpomdp_grad(traj, policy, gamma, &[]),
        }
    }

    fn resolved_for(&self, trajs: &[Trajectory], gamma: f64) -> GradientEstimator {
        match self {
            GradientEstimator::Gpomdp { baselines: StepBaselines::BatchAverage } => {
                let h_max = trajs.iter().map(Trajectory::horizon).max().unwrap_or(0);
                let mut b = vec![0.0; h_max];
                for t in trajs {
                    let mut disc = 1.0;
                    for (bh, r) in b.iter_mut().zip(t.rewards()) {
                        *bh += disc * r;
                        disc *= gamma;
                    }
                }
                b.iter_mut().for_each(|v| *v /= trajs.len() as f64);
                GradientEstimator::Gpomdp { baselines: StepBaselines::Fixed(b) }
            }
            other => other.clone(),
        }
    }
}

/// `[Σ_h ∇log π(a_h|s_h)]·[Σ_h γ^h r_h − b]`.
pub fn reinforce_grad(traj: &Trajectory, policy: &Policy, gamma: f64, baseline: f64) -> Result<Vec<f64>> {
    let ret = discounted_return(traj, gamma)?;
    let mut score_sum = vec![0.0; policy.dim()];
    for (s, a, _) in traj.steps() {
        axpy(1.0, &policy.score(s, a)?, &mut score_sum);
    }
    score_sum.iter_mut().for_each(|g| *g *= ret - baseline);
    Ok(score_sum)
}

/// `Σ_h (Σ_{t≤h} ∇log π(a_t|s_t))·(γ^h r_h − b_h)`. An empty `baselines`
/// slice means all zeros; otherwise it must cover the horizon.
pub fn gpomdp_grad(traj: &Trajectory, policy: &Policy, gamma: f64, baselines: &[f64]) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside (0, 1)")));
    }
    if traj.is_empty() {
        return Err(Error::DegenerateRollout);
    }
    if !baselines.is_empty() && baselines.len() < traj.horizon() {
        return Err(Error::InvalidArgument(format!(
            "{} baselines for horizon {}",
            baselines.len(),
            traj.horizon()
        )));
    }
    let d = policy.dim();
    let mut cumulative = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut disc = 1.0;
    for (h, (s, a, r)) in traj.steps().enumerate() {
        axpy(1.0, &policy.score(s, a)?, &mut cumulative);
        let b = baselines.get(h).copied().unwrap_or(0.0);
        axpy(disc * r - b, &cumulative, &mut grad);
        disc *= gamma;
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub n_trajectories: usize,
    pub estimator: String,
}

/// Per-trajectory estimates for a batch, in batch order.
pub fn per_trajectory_grads(
    trajs: &[Trajectory],
    policy: &Policy,
    estimator: &GradientEstimator,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let est = estimator.resolved_for(trajs, gamma);
    trajs.par_iter().map(|t| est.grad(t, policy, gamma)).collect()
}

/// `(1/N) Σ_i g(τ_i|θ)` with a fixed pairwise reduction order.
pub fn batch_grad(
    trajs: &[Trajectory],
    policy: &Policy,
    estimator: &GradientEstimator,
    gamma: f64,
) -> Result<GradientEstimate> {
    if trajs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let grads = per_trajectory_grads(trajs, policy, estimator, gamma)?;
    let grad = pairwise_mean(&grads).expect("non-empty batch");
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("batch gradient".into()));
    }
    Ok(GradientEstimate { grad, n_trajectories: trajs.len(), estimator: estimator.name().to_string() })
}

/// `J(θ)` and `∇J(θ)` computed exactly over all trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `Σ_τ p(τ|θ)·(Σ_h ∇log π(a_h|s_h))·R(τ)` and `Σ_τ p(τ|θ)·R(τ)`.
pub fn exact_grad(mdp: &TabularMdp, policy: &Policy) -> Result<ExactGradient> {
    let all = enumerate_trajectories(mdp, policy)?;
    let mut terms = Vec::with_capacity(all.len());
    let mut values = Vec::with_capacity(all.len());
    for (t, p) in &all {
        let ret = discounted_return(t, mdp.gamma())?;
        let mut g = vec![0.0; policy.dim()];
        for (s, a, _) in t.steps() {
            axpy(1.0, &policy.score(s, a)?, &mut g);
        }
        g.iter_mut().for_each(|v| *v *= p * ret);
        terms.push(g);
        values.push(p * ret);
    }
    Ok(ExactGradient { value: pairwise_sum_scalars(&values), grad: pairwise_sum(&terms).unwrap_or_default() })
}

/// Exact `J(θ)`.
pub fn exact_return(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let all = enumerate_trajectories(mdp, policy)?;
    let values = all
        .iter()
        .map(|(t, p)| Ok(p * discounted_return(t, mdp.gamma())?))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum_scalars(&values))
}

/// `E_τ[g(τ|θ)]` by enumeration, for unbiasedness checks.
pub fn expected_estimate(mdp: &TabularMdp, policy: &Policy, estimator: &GradientEstimator) -> Result<Vec<f64>> {
    let all = enumerate_trajectories(mdp, policy)?;
    let terms = all
        .iter()
        .map(|(t, p)| {
            let mut g = estimator.grad(t, policy, mdp.gamma())?;
            g.iter_mut().for_each(|v| *v *= p);
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&terms).unwrap_or_default())
}

/// Trace of `Cov[g(τ|θ)]` by enumeration.
pub fn exact_covariance_trace(mdp: &TabularMdp, policy: &Policy, estimator: &GradientEstimator) -> Result<f64> {
    let all = enumerate_trajectories(mdp, policy)?;
    let mut mean = vec![0.0; policy.dim()];
    let mut second = 0.0;
    for (t, p) in &all {
        let g = estimator.grad(t, policy, mdp.gamma())?;
        axpy(*p, &g, &mut mean);
        second += p * norm_sq(&g);
    }
    Ok((second - norm_sq(&mean)).max(0.0))
}
