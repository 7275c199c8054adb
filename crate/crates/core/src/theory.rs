//! Smoothness and variance constants, the epoch-length condition, the
//! ε-driven schedule and exact Rényi-divergence diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{exact_covariance_trace, GradientEstimator};
use crate::linalg::{axpy, norm, pairwise_sum_scalars};
use crate::policy::Policy;
use crate::rng::{self, Purpose};
use crate::tabular::TabularMdp;
use crate::trajectory::enumerate_paths;

/// Problem constants. The derived quantities are recomputed on every read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Bound on `‖∇ log π‖`.
    pub g: f64,
    /// Bound on `‖∇² log π‖`.
    pub m: f64,
    /// Reward bound.
    pub r: f64,
    /// Horizon.
    pub h: f64,
    pub gamma: f64,
    /// Baseline magnitude.
    pub b: f64,
    /// Bound on `Var(ω)`.
    pub w: f64,
    /// Bound on the estimator's standard deviation.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub l: f64,
    pub l_g: f64,
    pub c_g: f64,
    pub c_omega: f64,
}

impl TheoryConstants {
    /// Smoothness of `J`: `HR(M + HG²)/(1−γ)`.
    pub fn l(&self) -> f64 {
        self.h * self.r * (self.m + self.h * self.g * self.g) / (1.0 - self.gamma)
    }

    /// Lipschitz constant of `g(τ|·)`: `HM(R+|b|)/(1−γ)`.
    pub fn l_g(&self) -> f64 {
        self.h * self.m * (self.r + self.b.abs()) / (1.0 - self.gamma)
    }

    /// Bound on `‖g(τ|θ)‖`: `HG(R+|b|)/(1−γ)`.
    pub fn c_g(&self) -> f64 {
        self.h * self.g * (self.r + self.b.abs()) / (1.0 - self.gamma)
    }

    /// `Var(ω) ≤ C_ω‖θ̃−θ‖²` with `C_ω = H(2HG² + M)(W+1)`.
    pub fn c_omega(&self) -> f64 {
        self.h * (2.0 * self.h * self.g * self.g + self.m) * (self.w + 1.0)
    }

    pub fn derived(&self) -> DerivedConstants {
        DerivedConstants { l: self.l(), l_g: self.l_g(), c_g: self.c_g(), c_omega: self.c_omega() }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn derive_constants(
    g: f64,
    m: f64,
    r: f64,
    h: usize,
    gamma: f64,
    b: f64,
    w: f64,
    sigma: f64,
) -> Result<TheoryConstants> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    for (name, v) in [("G", g), ("M", m), ("R", r)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be positive")));
        }
    }
    for (name, v) in [("b", b), ("W", w), ("sigma", sigma)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be non-negative")));
        }
    }
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(TheoryConstants { g, m, r, h: h as f64, gamma, b, w, sigma })
}

/// Closed-form `(G, M)` for a tabular softmax policy, valid for every `θ`:
/// `‖e_a − p‖ ≤ √2` and `‖diag(p) − ppᵀ‖₂ ≤ 1/2`.
pub fn softmax_score_bounds() -> (f64, f64) {
    (std::f64::consts::SQRT_2, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochCheck {
    pub passed: bool,
    /// `(B/m²) / rhs`; at least 1 when the condition holds.
    pub ratio: f64,
    pub rhs: f64,
}

/// Right-hand side of `B/m² ≥ 3(C_ω C_g² + L_g²)/(2L²)`.
pub fn epoch_condition_rhs(c: &TheoryConstants) -> f64 {
    let (l, l_g, c_g) = (c.l(), c.l_g(), c.c_g());
    3.0 * (c.c_omega() * c_g * c_g + l_g * l_g) / (2.0 * l * l)
}

pub fn check_epoch_condition(b: usize, m: usize, constants: &TheoryConstants) -> EpochCheck {
    check_with_rhs(b, m, epoch_condition_rhs(constants))
}

fn check_with_rhs(b: usize, m: usize, rhs: f64) -> EpochCheck {
    let lhs = b as f64 / (m as f64 * m as f64);
    EpochCheck { passed: lhs >= rhs, ratio: lhs / rhs, rhs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epsilon: f64,
    pub n: usize,
    pub b: usize,
    /// `B` before inflation for the epoch condition.
    pub b_nominal: usize,
    pub m: usize,
    pub eta: f64,
    pub s: usize,
}

impl Schedule {
    /// Total trajectories `S·N + S·m·B`.
    pub fn budget(&self) -> u64 {
        let (s, n, m, b) = (self.s as u64, self.n as u64, self.m as u64, self.b as u64);
        s * n + s * m * b
    }
}

/// `η = 1/(4L)`, `N = ⌈c_N/ε⌉`, `B = ⌈N^{2/3}⌉`, `m = ⌈√B⌉`, then `B` raised
/// to the smallest value meeting the epoch condition and `S = ⌈c_T/(εm)⌉`.
pub fn schedule(epsilon: f64, constants: &TheoryConstants, c_n: f64, c_t: f64) -> Result<Schedule> {
    schedule_with_rhs(epsilon, constants, c_n, c_t, epoch_condition_rhs)
}

/// [`schedule`] with a substitute for the epoch-condition right-hand side.
pub fn schedule_with_rhs(
    epsilon: f64,
    constants: &TheoryConstants,
    c_n: f64,
    c_t: f64,
    rhs: impl Fn(&TheoryConstants) -> f64,
) -> Result<Schedule> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if !(c_n > 0.0 && c_t > 0.0) {
        return Err(Error::InvalidArgument("schedule prefactors must be positive".into()));
    }
    let n = (c_n / epsilon).ceil().max(1.0) as usize;
    let b_nominal = (n as f64).powf(2.0 / 3.0).ceil().max(1.0) as usize;
    let m = (b_nominal as f64).sqrt().ceil().max(1.0) as usize;
    let r = rhs(constants);
    let mut b = b_nominal.max((r * (m * m) as f64).ceil() as usize);
    // Correct the ceiling for rounding in either direction.
    while b > b_nominal && check_with_rhs(b - 1, m, r).passed {
        b -= 1;
    }
    while !check_with_rhs(b, m, r).passed {
        b += 1;
    }
    let s = (c_t / (epsilon * m as f64)).ceil().max(1.0) as usize;
    Ok(Schedule { epsilon, n, b, b_nominal, m, eta: 1.0 / (4.0 * constants.l()), s })
}

/// `8·J_gap/(ηSm) + 6σ²/N`.
pub fn theorem_bound(constants: &TheoryConstants, s: usize, m: usize, eta: f64, n: usize, j_gap: f64) -> f64 {
    8.0 * j_gap / (eta * s as f64 * m as f64) + 6.0 * constants.sigma * constants.sigma / n as f64
}

/// Per-path log-probabilities of two policies, paired with the environment
/// part. `None` marks paths impossible under `policy`.
fn paired_log_probs(mdp: &TabularMdp, p1: &Policy, p2: &Policy) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (traj, env_log) in enumerate_paths(mdp)? {
        let (mut l1, mut l2) = (env_log, env_log);
        for (s, a, _) in traj.steps() {
            l1 += p1.log_density(s, a)?;
            l2 += p2.log_density(s, a)?;
        }
        if l1 > f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
            return Err(Error::AbsoluteContinuity);
        }
        if l2 > f64::NEG_INFINITY {
            out.push((l1, l2));
        }
    }
    Ok(out)
}

/// `d₂(p₁‖p₂) = Σ_τ p₁(τ)²/p₂(τ)`, normalised by the enumerated mass of `p₂`.
pub fn renyi_d2_exact(mdp: &TabularMdp, policy1: &Policy, policy2: &Policy) -> Result<f64> {
    let pairs = paired_log_probs(mdp, policy1, policy2)?;
    let mass: Vec<f64> = pairs.iter().map(|(_, l2)| l2.exp()).collect();
    let terms: Vec<f64> = pairs
        .iter()
        .zip(&mass)
        .map(|((l1, l2), p2)| {
            let w = (l1 - l2).exp();
            p2 * w * w
        })
        .collect();
    Ok(pairwise_sum_scalars(&terms) / pairwise_sum_scalars(&mass))
}

/// `Var(ω)` for `τ ~ policy2`, `ω = p₁/p₂`, as `Σ p₂(ω − 1)²`.
pub fn weight_variance_exact(mdp: &TabularMdp, policy1: &Policy, policy2: &Policy) -> Result<f64> {
    let pairs = paired_log_probs(mdp, policy1, policy2)?;
    let mass: Vec<f64> = pairs.iter().map(|(_, l2)| l2.exp()).collect();
    let terms: Vec<f64> = pairs
        .iter()
        .zip(&mass)
        .map(|((l1, l2), p2)| {
            let dw = (l1 - l2).exp_m1();
            p2 * dw * dw
        })
        .collect();
    Ok(pairwise_sum_scalars(&terms) / pairwise_sum_scalars(&mass))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfileRow {
    pub delta: f64,
    pub variance: f64,
    /// `Var(ω)/δ²`, `NaN` at `δ = 0`.
    pub ratio: f64,
    /// `d₂ − 1` for the same pair.
    pub d2_minus_one: f64,
}

/// Exact `Var(ω)` for `θ̃ = θ + δu` against `θ`, over each `δ`.
pub fn weight_variance_profile(
    mdp: &TabularMdp,
    policy: &Policy,
    direction: &[f64],
    deltas: &[f64],
) -> Result<Vec<VarianceProfileRow>> {
    if direction.len() != policy.dim() {
        return Err(Error::InvalidArgument("direction length differs from the parameter dimension".into()));
    }
    if (norm(direction) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("direction must be a unit vector".into()));
    }
    deltas
        .iter()
        .map(|&delta| {
            let mut theta = policy.theta().to_vec();
            axpy(delta, direction, &mut theta);
            let shifted = policy.with_theta(theta)?;
            let variance = weight_variance_exact(mdp, &shifted, policy)?;
            let d2 = renyi_d2_exact(mdp, &shifted, policy)?;
            let ratio = if delta == 0.0 { f64::NAN } else { variance / (delta * delta) };
            Ok(VarianceProfileRow { delta, variance, ratio, d2_minus_one: d2 - 1.0 })
        })
        .collect()
}

/// Random unit vector of dimension `d`.
pub fn random_direction(d: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Purpose::Probe, 0, 0, index);
    loop {
        let mut u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&u);
        if n > 1e-3 {
            u.iter_mut().for_each(|x| *x /= n);
            return u;
        }
    }
}

/// `W` as the largest exact `Var(ω)` over `count` random pairs
/// `(θ, θ + Δ)` with `θ` drawn from `[-spread, spread]^d` and `‖Δ‖ ≤ radius`.
pub fn probe_weight_variance(
    mdp: &TabularMdp,
    template: &Policy,
    spread: f64,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let d = template.dim();
    let mut worst = 0.0f64;
    for i in 0..count as u64 {
        let mut rng = rng::stream(seed, Purpose::Probe, 1, 0, i);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-spread..=spread)).collect();
        let length = radius * rng.random::<f64>();
        let mut shifted = theta.clone();
        axpy(length, &random_direction(d, seed, i), &mut shifted);
        let base = template.with_theta(theta)?;
        worst = worst.max(weight_variance_exact(mdp, &template.with_theta(shifted)?, &base)?);
    }
    Ok(worst)
}

/// `σ²` as the largest exact trace-covariance of `g(τ|θ)` over the probes.
pub fn probe_sigma_sq(mdp: &TabularMdp, probes: &[Policy], estimator: &GradientEstimator) -> Result<f64> {
    probes
        .iter()
        .try_fold(0.0f64, |acc, p| Ok(acc.max(exact_covariance_trace(mdp, p, estimator)?)))
}
