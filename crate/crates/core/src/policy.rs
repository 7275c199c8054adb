//! Parameterized stochastic policies with exact score functions.
//!
//! A [`Policy`] is an immutable value: an [`Architecture`] plus a flat
//! parameter vector. Optimizers produce new parameter vectors and rebuild
//! the policy with [`Policy::with_theta`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, log_sum_exp, norm};
use crate::rng::{self, Purpose};
use crate::tabular::discrete_index;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Architecture {
    /// Mean `θᵀφ(s)` with `φ(s) = [clip(s), 1]`, fixed standard deviation.
    GaussianLinear { state_dim: usize, action_dim: usize, sigma: f64, feature_clip: f64 },
    /// Mean from one tanh hidden layer over the clipped state.
    GaussianMlp { state_dim: usize, action_dim: usize, hidden: usize, sigma: f64, input_clip: f64 },
    /// Independent logits per state.
    SoftmaxTabular { num_states: usize, num_actions: usize },
}

impl Architecture {
    pub fn dim(&self) -> usize {
        match *self {
            Architecture::GaussianLinear { state_dim, action_dim, .. } => action_dim * (state_dim + 1),
            Architecture::GaussianMlp { state_dim, action_dim, hidden, .. } => {
                hidden * state_dim + hidden + action_dim * hidden + action_dim
            }
            Architecture::SoftmaxTabular { num_states, num_actions } => num_states * num_actions,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            Architecture::GaussianLinear { sigma, .. } | Architecture::GaussianMlp { sigma, .. } => Some(sigma),
            Architecture::SoftmaxTabular { .. } => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Architecture::SoftmaxTabular { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match *self {
            Architecture::GaussianLinear { state_dim, action_dim, sigma, feature_clip } => {
                if state_dim == 0 || action_dim == 0 {
                    return bad("gaussian-linear dimensions must be positive");
                }
                if !(sigma > 0.0 && sigma.is_finite()) || !(feature_clip > 0.0) {
                    return bad("gaussian-linear needs sigma > 0 and feature_clip > 0");
                }
            }
            Architecture::GaussianMlp { state_dim, action_dim, hidden, sigma, input_clip } => {
                if state_dim == 0 || action_dim == 0 || hidden == 0 {
                    return bad("gaussian-mlp dimensions must be positive");
                }
                if !(sigma > 0.0 && sigma.is_finite()) || !(input_clip > 0.0) {
                    return bad("gaussian-mlp needs sigma > 0 and input_clip > 0");
                }
            }
            Architecture::SoftmaxTabular { num_states, num_actions } => {
                if num_states == 0 || num_actions == 0 {
                    return bad("softmax-tabular sizes must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    architecture: Architecture,
    theta: Vec<f64>,
}

/// Hidden activations and the mean they produce.
struct MlpForward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    mean: Vec<f64>,
}

impl Policy {
    pub fn new(architecture: Architecture, theta: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if theta.len() != architecture.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, architecture needs {}",
                theta.len(),
                architecture.dim()
            )));
        }
        if !all_finite(&theta) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        Ok(Policy { architecture, theta })
    }

    pub fn zeros(architecture: Architecture) -> Result<Self> {
        let d = architecture.dim();
        Self::new(architecture, vec![0.0; d])
    }

    /// Seeded initialization: MLP weights uniform in `±1/sqrt(fan_in)`,
    /// everything else zero.
    pub fn initialize(architecture: Architecture, seed: u64) -> Result<Self> {
        let Architecture::GaussianMlp { state_dim, action_dim, hidden, .. } = architecture else {
            return Self::zeros(architecture);
        };
        let mut rng = rng::stream(seed, Purpose::Initialization, 0, 0, 0);
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let mut theta = draw(state_dim, hidden * state_dim + hidden);
        theta.extend(draw(hidden, action_dim * hidden + action_dim));
        Self::new(architecture, theta)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.architecture.clone(), theta)
    }

    /// `φ(s)` for the linear family: clipped state followed by a constant 1.
    pub fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        match self.architecture {
            Architecture::GaussianLinear { state_dim, feature_clip, .. } => {
                check_len(state, state_dim, "state")?;
                let mut phi: Vec<f64> = state.iter().map(|v| v.clamp(-feature_clip, feature_clip)).collect();
                phi.push(1.0);
                Ok(phi)
            }
            _ => Err(Error::InvalidArgument("features are defined for gaussian-linear only".into())),
        }
    }

    /// Bound on `‖φ(s)‖` implied by the clip; `None` for non-linear families.
    pub fn feature_norm_bound(&self) -> Option<f64> {
        match self.architecture {
            Architecture::GaussianLinear { state_dim, feature_clip, .. } => {
                Some((state_dim as f64 * feature_clip * feature_clip + 1.0).sqrt())
            }
            _ => None,
        }
    }

    fn mlp_forward(&self, state: &[f64]) -> Result<MlpForward> {
        let Architecture::GaussianMlp { state_dim, action_dim, hidden, input_clip, .. } = self.architecture else {
            unreachable!("mlp_forward on non-MLP policy");
        };
        check_len(state, state_dim, "state")?;
        let input: Vec<f64> = state.iter().map(|v| v.clamp(-input_clip, input_clip)).collect();
        let (w1, rest) = self.theta.split_at(hidden * state_dim);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(action_dim * hidden);
        let hidden_act: Vec<f64> = (0..hidden)
            .map(|j| {
                let row = &w1[j * state_dim..(j + 1) * state_dim];
                (row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>() + b1[j]).tanh()
            })
            .collect();
        let mean = (0..action_dim)
            .map(|k| {
                let row = &w2[k * hidden..(k + 1) * hidden];
                row.iter().zip(&hidden_act).map(|(w, z)| w * z).sum::<f64>() + b2[k]
            })
            .collect();
        Ok(MlpForward { input, hidden: hidden_act, mean })
    }

    /// Mean action of a Gaussian policy.
    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        match self.architecture {
            Architecture::GaussianLinear { action_dim, state_dim, .. } => {
                let phi = self.features(state)?;
                let f = state_dim + 1;
                Ok((0..action_dim)
                    .map(|k| self.theta[k * f..(k + 1) * f].iter().zip(&phi).map(|(t, p)| t * p).sum())
                    .collect())
            }
            Architecture::GaussianMlp { .. } => Ok(self.mlp_forward(state)?.mean),
            Architecture::SoftmaxTabular { .. } => {
                Err(Error::InvalidArgument("softmax-tabular policies have no mean action".into()))
            }
        }
    }

    /// Action probabilities of a softmax-tabular policy at a state index.
    pub fn action_probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        let logp = self.softmax_log_probs(state)?;
        Ok(logp.iter().map(|l| l.exp()).collect())
    }

    fn softmax_log_probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        let Architecture::SoftmaxTabular { num_states, num_actions } = self.architecture else {
            return Err(Error::InvalidArgument("not a softmax-tabular policy".into()));
        };
        let s = discrete_index(state, num_states, "state")?;
        let logits = &self.theta[s * num_actions..(s + 1) * num_actions];
        let lse = log_sum_exp(logits);
        Ok(logits.iter().map(|l| l - lse).collect())
    }

    /// Log-density without the zero-probability check; may be `-inf` for
    /// discrete families.
    pub fn log_density(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        match self.architecture {
            Architecture::SoftmaxTabular { num_actions, .. } => {
                let a = discrete_index(action, num_actions, "action")?;
                Ok(self.softmax_log_probs(state)?[a])
            }
            _ => {
                let sigma = self.architecture.sigma().expect("gaussian family");
                let mean = self.mean(state)?;
                check_len(action, mean.len(), "action")?;
                Ok(gaussian_log_pdf(action, &mean, sigma))
            }
        }
    }

    /// Exact log-density `log π_θ(a|s)`.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let lp = self.log_density(state, action)?;
        if lp == f64::NEG_INFINITY {
            return Err(Error::ZeroProbability(format!("action {action:?} at state {state:?}")));
        }
        Ok(lp)
    }

    /// `∇_θ log π_θ(a|s)`.
    pub fn score(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_prob_and_score(state, action)?.1)
    }

    /// Log-density and score from a single forward pass.
    pub fn log_prob_and_score(&self, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.dim();
        match self.architecture {
            Architecture::GaussianLinear { state_dim, sigma, .. } => {
                let phi = self.features(state)?;
                let mean = self.mean(state)?;
                check_len(action, mean.len(), "action")?;
                let f = state_dim + 1;
                let mut g = vec![0.0; d];
                for (k, (a, mu)) in action.iter().zip(&mean).enumerate() {
                    let c = (a - mu) / (sigma * sigma);
                    for (gi, p) in g[k * f..(k + 1) * f].iter_mut().zip(&phi) {
                        *gi = c * p;
                    }
                }
                Ok((gaussian_log_pdf(action, &mean, sigma), g))
            }
            Architecture::GaussianMlp { state_dim, action_dim, hidden, sigma, .. } => {
                let fw = self.mlp_forward(state)?;
                check_len(action, action_dim, "action")?;
                let w2 = &self.theta[hidden * state_dim + hidden..hidden * state_dim + hidden + action_dim * hidden];
                let mut g = vec![0.0; d];
                let (g_w1, rest) = g.split_at_mut(hidden * state_dim);
                let (g_b1, rest) = rest.split_at_mut(hidden);
                let (g_w2, g_b2) = rest.split_at_mut(action_dim * hidden);
                // Back-propagate the Gaussian residual through the output layer.
                let mut delta_hidden = vec![0.0; hidden];
                for k in 0..action_dim {
                    let c = (action[k] - fw.mean[k]) / (sigma * sigma);
                    g_b2[k] = c;
                    for j in 0..hidden {
                        g_w2[k * hidden + j] = c * fw.hidden[j];
                        delta_hidden[j] += c * w2[k * hidden + j];
                    }
                }
                for j in 0..hidden {
                    let dz = delta_hidden[j] * (1.0 - fw.hidden[j] * fw.hidden[j]);
                    g_b1[j] = dz;
                    for i in 0..state_dim {
                        g_w1[j * state_dim + i] = dz * fw.input[i];
                    }
                }
                Ok((gaussian_log_pdf(action, &fw.mean, sigma), g))
            }
            Architecture::SoftmaxTabular { num_actions, .. } => {
                let s = discrete_index(state, usize::MAX, "state")?;
                let a = discrete_index(action, num_actions, "action")?;
                let logp = self.softmax_log_probs(state)?;
                if logp[a] == f64::NEG_INFINITY {
                    return Err(Error::ZeroProbability(format!("action {a} at state {s}")));
                }
                let mut g = vec![0.0; d];
                for (b, lp) in logp.iter().enumerate() {
                    g[s * num_actions + b] = if b == a { 1.0 } else { 0.0 } - lp.exp();
                }
                Ok((logp[a], g))
            }
        }
    }

    /// Draw `a ~ π_θ(·|s)`. Gaussian draws are not clipped here.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self.architecture {
            Architecture::SoftmaxTabular { .. } => {
                let p = self.action_probabilities(state)?;
                Ok(vec![crate::tabular::sample_categorical(&p, rng) as f64])
            }
            _ => {
                let sigma = self.architecture.sigma().expect("gaussian family");
                let mean = self.mean(state)?;
                Ok(mean
                    .into_iter()
                    .map(|mu| {
                        let z: f64 = rng.sample(StandardNormal);
                        mu + sigma * z
                    })
                    .collect())
            }
        }
    }

    /// Hessian of `log π_θ(a|s)` by central differences of the score.
    pub fn log_prob_hessian(&self, state: &[f64], action: &[f64], h: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut hess = DMatrix::zeros(d, d);
        let mut theta = self.theta.clone();
        for j in 0..d {
            let orig = theta[j];
            theta[j] = orig + h;
            let plus = self.with_theta(theta.clone())?.score(state, action)?;
            theta[j] = orig - h;
            let minus = self.with_theta(theta.clone())?.score(state, action)?;
            theta[j] = orig;
            for i in 0..d {
                hess[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok((&hess + hess.transpose()) * 0.5)
    }
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidArgument(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

fn gaussian_log_pdf(x: &[f64], mean: &[f64], sigma: f64) -> f64 {
    x.iter()
        .zip(mean)
        .map(|(a, mu)| {
            let z = (a - mu) / sigma;
            -HALF_LN_2PI - sigma.ln() - 0.5 * z * z
        })
        .sum()
}

/// Empirical suprema of `‖∇ log π‖` (`g`) and `‖∇² log π‖₂` (`m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub g: f64,
    pub m: f64,
}

/// Finite-difference step for Hessian estimates.
pub const HESSIAN_STEP: f64 = 1e-5;

/// Estimate `(G, M)` as the maxima over `n_samples` state-action pairs drawn
/// from `sampler`. The Hessian is a central difference of the exact score.
pub fn estimate_score_bounds<F>(policy: &Policy, n_samples: usize, mut sampler: F) -> Result<ScoreBounds>
where
    F: FnMut() -> (Vec<f64>, Vec<f64>),
{
    let mut bounds = ScoreBounds { g: 0.0, m: 0.0 };
    for _ in 0..n_samples {
        let (s, a) = sampler();
        let g = norm(&policy.score(&s, &a)?);
        let hess = policy.log_prob_hessian(&s, &a, HESSIAN_STEP)?;
        let m = SymmetricEigen::new(hess).eigenvalues.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        if !g.is_finite() || !m.is_finite() {
            return Err(Error::NonFinite(format!("score bound estimate at state {s:?}, action {a:?}")));
        }
        bounds.g = bounds.g.max(g);
        bounds.m = bounds.m.max(m);
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn linear(sigma: f64) -> Architecture {
        Architecture::GaussianLinear { state_dim: 1, action_dim: 1, sigma, feature_clip: 10.0 }
    }

    fn mlp() -> Architecture {
        Architecture::GaussianMlp { state_dim: 3, action_dim: 2, hidden: 4, sigma: 0.7, input_clip: 5.0 }
    }

    fn random_theta(d: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Misc, 0, 0, 0);
        (0..d).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn gaussian_peak_density() {
        let p = Policy::new(linear(1.0), vec![0.3, -0.2]).unwrap();
        let s = [1.5];
        let a = p.mean(&s).unwrap();
        assert!((p.log_prob(&s, &a).unwrap() + HALF_LN_2PI).abs() < 1e-15);
        assert!(p.score(&s, &a).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_score_plug_in() {
        // θ = 0, a = 1, σ = 1: the score equals φ(s) = (s, 1).
        let p = Policy::zeros(linear(1.0)).unwrap();
        assert_eq!(p.score(&[1.0], &[1.0]).unwrap(), vec![1.0, 1.0]);
        let p2 = Policy::zeros(Architecture::GaussianLinear {
            state_dim: 1,
            action_dim: 1,
            sigma: 1.0,
            feature_clip: 1.0,
        })
        .unwrap();
        assert_eq!(p2.score(&[0.0], &[1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn uniform_softmax_log_prob() {
        let p = Policy::zeros(Architecture::SoftmaxTabular { num_states: 2, num_actions: 4 }).unwrap();
        assert!((p.log_prob(&[1.0], &[3.0]).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        let probs = p.action_probabilities(&[0.0]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_score_has_zero_mean() {
        let arch = Architecture::SoftmaxTabular { num_states: 3, num_actions: 4 };
        let p = Policy::new(arch, random_theta(12, 5, 2.0)).unwrap();
        for s in 0..3 {
            let st = [s as f64];
            let probs = p.action_probabilities(&st).unwrap();
            let mut mean = vec![0.0; 12];
            for (a, pa) in probs.iter().enumerate() {
                let g = p.score(&st, &[a as f64]).unwrap();
                mean.iter_mut().zip(&g).for_each(|(m, gi)| *m += pa * gi);
            }
            assert!(mean.iter().all(|m| m.abs() < 1e-12));
        }
    }

    // Independent forward pass written without the flat-slice bookkeeping.
    fn mlp_log_prob_oracle(theta: &[f64], s: &[f64], a: &[f64]) -> f64 {
        let (inp, hid, out, sigma) = (3, 4, 2, 0.7);
        let w1 = |j: usize, i: usize| theta[j * inp + i];
        let b1 = |j: usize| theta[hid * inp + j];
        let w2 = |k: usize, j: usize| theta[hid * inp + hid + k * hid + j];
        let b2 = |k: usize| theta[hid * inp + hid + out * hid + k];
        let z: Vec<f64> = (0..hid).map(|j| ((0..inp).map(|i| w1(j, i) * s[i]).sum::<f64>() + b1(j)).tanh()).collect();
        (0..out)
            .map(|k| {
                let mu = (0..hid).map(|j| w2(k, j) * z[j]).sum::<f64>() + b2(k);
                let pdf = (-(a[k] - mu).powi(2) / (2.0 * sigma * sigma)).exp()
                    / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
                pdf.ln()
            })
            .sum()
    }

    #[test]
    fn mlp_log_prob_matches_oracle() {
        let arch = mlp();
        let theta = random_theta(arch.dim(), 9, 0.5);
        let p = Policy::new(arch, theta.clone()).unwrap();
        let (s, a) = ([0.2, -1.0, 0.7], [0.4, -0.3]);
        let got = p.log_prob(&s, &a).unwrap();
        assert!((got - mlp_log_prob_oracle(&theta, &s, &a)).abs() < 1e-12);
    }

    fn fd_score(p: &Policy, s: &[f64], a: &[f64], h: f64) -> Vec<f64> {
        (0..p.dim())
            .map(|j| {
                let mut tp = p.theta().to_vec();
                let mut tm = p.theta().to_vec();
                tp[j] += h;
                tm[j] -= h;
                let lp = p.with_theta(tp).unwrap().log_prob(s, a).unwrap();
                let lm = p.with_theta(tm).unwrap().log_prob(s, a).unwrap();
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        norm(&crate::linalg::sub(a, b)) / norm(b).max(1e-300)
    }

    #[test]
    fn scores_match_finite_differences() {
        let cases = [
            (mlp(), vec![0.2, -1.0, 0.7], vec![0.4, -0.3]),
            (linear(0.5), vec![0.8], vec![-0.4]),
            (Architecture::SoftmaxTabular { num_states: 2, num_actions: 3 }, vec![1.0], vec![2.0]),
        ];
        for (seed, (arch, s, a)) in cases.into_iter().enumerate() {
            let p = Policy::new(arch.clone(), random_theta(arch.dim(), seed as u64, 0.8)).unwrap();
            let err = rel_err(&p.score(&s, &a).unwrap(), &fd_score(&p, &s, &a, 1e-5));
            assert!(err < 1e-5, "{arch:?}: rel err {err}");
        }
    }

    #[test]
    fn near_deterministic_gaussian_sample() {
        let p = Policy::new(linear(1e-8), vec![0.5, 0.25]).unwrap();
        let a = p.sample_action(&[2.0], &mut stream(0, Purpose::Misc, 0, 0, 0)).unwrap();
        assert!((a[0] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn gaussian_sample_moments() {
        let p = Policy::new(linear(0.8), vec![0.5, 0.25]).unwrap();
        let n = 100_000;
        let mut rng = stream(4, Purpose::Misc, 0, 0, 0);
        let draws: Vec<f64> = (0..n).map(|_| p.sample_action(&[2.0], &mut rng).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = 0.8 / (n as f64).sqrt();
        // Var of the sample variance for a normal: 2σ⁴/(n-1).
        let se_var = (2.0 * 0.8f64.powi(4) / (n - 1) as f64).sqrt();
        assert!((mean - 1.25).abs() < 3.0 * se_mean);
        assert!((var - 0.64).abs() < 3.0 * se_var);
    }

    #[test]
    fn gaussian_score_mean_zero_monte_carlo() {
        let p = Policy::new(linear(0.6), vec![-0.3, 0.1]).unwrap();
        let s = [1.2];
        let n = 100_000;
        let mut rng = stream(8, Purpose::Misc, 0, 0, 0);
        let scores: Vec<Vec<f64>> =
            (0..n).map(|_| p.score(&s, &p.sample_action(&s, &mut rng).unwrap()).unwrap()).collect();
        for j in 0..2 {
            let col: Vec<f64> = scores.iter().map(|g| g[j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!(m.abs() < 3.0 * sd / (n as f64).sqrt(), "component {j}");
        }
    }

    #[test]
    fn dominant_softmax_action() {
        let p = Policy::new(Architecture::SoftmaxTabular { num_states: 1, num_actions: 3 }, vec![0.0, 12.0, 0.0])
            .unwrap();
        let mut rng = stream(2, Purpose::Misc, 0, 0, 0);
        let hits = (0..10_000)
            .filter(|_| p.sample_action(&[0.0], &mut rng).unwrap()[0] == 1.0)
            .count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn linear_score_bounds_closed_form() {
        let sigma = 0.5;
        let c = 0.3;
        let arch = Architecture::GaussianLinear { state_dim: 2, action_dim: 1, sigma, feature_clip: 0.5 };
        let p = Policy::new(arch, vec![0.2, -0.1, 0.05]).unwrap();
        let phi_bound = p.feature_norm_bound().unwrap();
        let mut rng = stream(6, Purpose::Misc, 0, 0, 0);
        let mut max_phi_sq: f64 = 0.0;
        // Residual |a - θᵀφ| ≤ c; score norm is |residual|·‖φ‖/σ².
        let sampler = || {
            let s = vec![rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let phi = p.features(&s).unwrap();
            max_phi_sq = max_phi_sq.max(phi.iter().map(|v| v * v).sum());
            let mean = p.mean(&s).unwrap()[0];
            (s, vec![mean + rng.random_range(-c..c)])
        };
        let b = estimate_score_bounds(&p, 200, sampler).unwrap();
        assert!(b.g <= c * phi_bound / (sigma * sigma) + 1e-9);
        // Hessian is the constant -φφᵀ/σ².
        assert!((b.m - max_phi_sq / (sigma * sigma)).abs() < 1e-5);
    }

    #[test]
    fn softmax_score_bound() {
        let arch = Architecture::SoftmaxTabular { num_states: 2, num_actions: 3 };
        let mut k = 0u64;
        let mut rng = stream(12, Purpose::Misc, 0, 0, 0);
        let mut max_g: f64 = 0.0;
        for _ in 0..50 {
            k += 1;
            let p = Policy::new(arch.clone(), random_theta(6, k, 5.0)).unwrap();
            let b = estimate_score_bounds(&p, 5, || {
                (vec![rng.random_range(0..2) as f64], vec![rng.random_range(0..3) as f64])
            })
            .unwrap();
            max_g = max_g.max(b.g);
            // The Hessian is minus a categorical covariance; its norm is at most 1.
            assert!(b.m <= 1.0 + 1e-6);
        }
        assert!(max_g <= 2.0 + 1e-9);
    }

    #[test]
    fn wrong_sizes_rejected() {
        assert!(Policy::new(linear(1.0), vec![0.0]).is_err());
        assert!(Policy::zeros(linear(0.0)).is_err());
        let p = Policy::zeros(linear(1.0)).unwrap();
        assert!(p.log_prob(&[0.0, 1.0], &[0.0]).is_err());
    }
}
