//! Acceptance criteria. Each test prints one PASS/FAIL line on stderr,
//! bypassing output capture so the lines appear in every test log.

use std::io::Write;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use svrpg::env::{Environment, Problem};
use svrpg::estimator::{exact_grad, expected_estimate, GradientEstimator, StepBaselines};
use svrpg::harness::check::{bandit_constants, example_constants};
use svrpg::harness::experiment::censored_median;
use svrpg::harness::{presets, run_experiment, sweep_minibatch, RunConfig};
use svrpg::policy::{estimate_score_bounds, Architecture, Policy};
use svrpg::rng::{stream, Purpose};
use svrpg::tabular::TabularMdp;
use svrpg::theory::{random_direction, renyi_d2_exact, schedule, weight_variance_profile};
use svrpg::trajectory::{sample_batch, Trajectory};
use svrpg::variance_reduction::{
    importance_weight, semi_stochastic_grad, svrpg_run, NoEvaluation, SvrpgConfig, DEFAULT_WEIGHT_LOG_CAP,
};

fn report(n: u32, name: &str, passed: bool, detail: String) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let line = format!("acceptance criterion {n:>2} [{name}]: {verdict} ({detail})\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {n} failed: {detail}");
}

fn theta(d: usize, seed: u64, i: u64, scale: f64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Misc, 0, 0, i);
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

fn softmax(mdp: &TabularMdp, t: Vec<f64>) -> Policy {
    Policy::new(Architecture::SoftmaxTabular { num_states: mdp.num_states(), num_actions: mdp.num_actions() }, t)
        .unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// Forward-mode dual numbers: the gradient of J through a dynamic program
// over state distributions, independent of trajectory enumeration.
#[derive(Clone, Debug)]
struct Dual {
    v: f64,
    g: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, d: usize) -> Self {
        Dual { v, g: vec![0.0; d] }
    }
    fn variable(v: f64, i: usize, d: usize) -> Self {
        let mut g = vec![0.0; d];
        g[i] = 1.0;
        Dual { v, g }
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        Dual { v: e, g: self.g.iter().map(|x| x * e).collect() }
    }
    fn recip(&self) -> Self {
        let r = 1.0 / self.v;
        Dual { v: r, g: self.g.iter().map(|x| -x * r * r).collect() }
    }
    fn scale(&self, k: f64) -> Self {
        Dual { v: self.v * k, g: self.g.iter().map(|x| x * k).collect() }
    }
}

impl Add for &Dual {
    type Output = Dual;
    fn add(self, o: &Dual) -> Dual {
        Dual { v: self.v + o.v, g: self.g.iter().zip(&o.g).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Dual {
    type Output = Dual;
    fn sub(self, o: &Dual) -> Dual {
        Dual { v: self.v - o.v, g: self.g.iter().zip(&o.g).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Dual {
    type Output = Dual;
    fn mul(self, o: &Dual) -> Dual {
        Dual { v: self.v * o.v, g: self.g.iter().zip(&o.g).map(|(a, b)| a * o.v + self.v * b).collect() }
    }
}

/// `(J, ∇J)` for a softmax policy by forward recursion over state marginals.
fn dp_return(mdp: &TabularMdp, logits: &[f64]) -> (f64, Vec<f64>) {
    let (ns, na, d) = (mdp.num_states(), mdp.num_actions(), logits.len());
    let th: Vec<Dual> = logits.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, d)).collect();
    let pi: Vec<Vec<Dual>> = (0..ns)
        .map(|s| {
            let shift = logits[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<Dual> = (0..na).map(|a| (&th[s * na + a] - &Dual::constant(shift, d)).exp()).collect();
            let z = e.iter().skip(1).fold(e[0].clone(), |acc, x| &acc + x).recip();
            e.iter().map(|x| x * &z).collect()
        })
        .collect();
    let mut dist: Vec<Dual> = mdp.rho().iter().map(|&p| Dual::constant(p, d)).collect();
    let mut j = Dual::constant(0.0, d);
    let mut disc = 1.0;
    for _ in 0..mdp.horizon() {
        let mut next = vec![Dual::constant(0.0, d); ns];
        for s in 0..ns {
            for a in 0..na {
                let w = &dist[s] * &pi[s][a];
                j = &j + &w.scale(disc * mdp.reward(s, a));
                for (s2, slot) in next.iter_mut().enumerate() {
                    *slot = &*slot + &w.scale(mdp.transition(s, a, s2));
                }
            }
        }
        dist = next;
        disc *= mdp.gamma();
    }
    (j.v, j.g)
}

/// Every path of the MDP with its probability under plain softmax
/// probabilities computed here.
fn hand_enumeration(mdp: &TabularMdp, logits: &[f64]) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let na = mdp.num_actions();
    let prob = |s: usize, a: usize| {
        let row = &logits[s * na..(s + 1) * na];
        row[a].exp() / row.iter().map(|x| x.exp()).sum::<f64>()
    };
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, Vec<usize>, f64)> =
        (0..mdp.num_states()).filter(|&s| mdp.rho()[s] > 0.0).map(|s| (vec![s], vec![], mdp.rho()[s])).collect();
    while let Some((states, actions, p)) = stack.pop() {
        if actions.len() == mdp.horizon() {
            out.push((states, actions, p));
            continue;
        }
        let s = *states.last().unwrap();
        for a in 0..na {
            for s2 in 0..mdp.num_states() {
                let t = mdp.transition(s, a, s2);
                if t > 0.0 {
                    let (mut st, mut ac) = (states.clone(), actions.clone());
                    st.push(s2);
                    ac.push(a);
                    stack.push((st, ac, p * prob(s, a) * t));
                }
            }
        }
    }
    out
}

fn to_trajectory(mdp: &TabularMdp, states: &[usize], actions: &[usize]) -> Trajectory {
    let rewards = states.iter().zip(actions).map(|(&s, &a)| mdp.reward(s, a)).collect();
    Trajectory::from_indices(states, actions, rewards).unwrap()
}

#[test]
fn criterion_01_estimator_unbiasedness() {
    let mdp = TabularMdp::oracle();
    let estimators = [
        GradientEstimator::Reinforce { baseline: 0.0 },
        GradientEstimator::Reinforce { baseline: 0.5 },
        GradientEstimator::Gpomdp { baselines: StepBaselines::Zero },
    ];
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20 {
        let t = theta(6, 101, i, 2.0);
        let (_, grad) = dp_return(&mdp, &t);
        let policy = softmax(&mdp, t);
        for est in &estimators {
            worst = worst.max(max_abs_diff(&expected_estimate(&mdp, &policy, est).unwrap(), &grad));
        }
        worst = worst.max(max_abs_diff(&exact_grad(&mdp, &policy).unwrap().grad, &grad));
    }
    let secs = start.elapsed().as_secs_f64();
    report(1, "estimator unbiasedness", worst < 1e-10 && secs < 10.0, format!("max residual {worst:.2e}, {secs:.2}s"));
}

#[test]
fn criterion_02_importance_weight_identities() {
    let mdp = TabularMdp::oracle();
    let start = std::time::Instant::now();
    let (mut r1, mut r2) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let (tc, tr) = (theta(6, 201, i, 1.5), theta(6, 202, i, 1.5));
        let (cur, reference) = (softmax(&mdp, tc.clone()), softmax(&mdp, tr.clone()));
        let p_cur = hand_enumeration(&mdp, &tc);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (states, actions, p) in &p_cur {
            let traj = to_trajectory(&mdp, states, actions);
            let w = importance_weight(&traj, &reference, &cur, DEFAULT_WEIGHT_LOG_CAP).unwrap().value;
            m1 += p * w;
            m2 += p * w * w;
        }
        let d2 = renyi_d2_exact(&mdp, &reference, &cur).unwrap();
        r1 = r1.max((m1 - 1.0).abs());
        r2 = r2.max((m2 - d2).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = r1 < 1e-10 && r2 < 1e-10 && secs < 10.0;
    report(2, "importance-weight identities", ok, format!("|E[w]-1| {r1:.2e}, |E[w^2]-d2| {r2:.2e}, {secs:.2}s"));
}

#[test]
fn criterion_03_quadratic_weight_variance() {
    let mdp = TabularMdp::oracle();
    let start = std::time::Instant::now();
    let base_theta = theta(6, 301, 0, 1.0);
    let base = softmax(&mdp, base_theta.clone());
    // Fisher information of the path distribution, from hand-computed scores.
    let paths = hand_enumeration(&mdp, &base_theta);
    let na = mdp.num_actions();
    let mut worst = 0.0f64;
    let mut fisher_gap = 0.0f64;
    for i in 0..10 {
        let u = random_direction(6, 302, i);
        let rows = weight_variance_profile(&mdp, &base, &u, &[1e-2, 1e-3]).unwrap();
        worst = worst.max((rows[0].ratio / rows[1].ratio - 1.0).abs());
        let mut quad = 0.0;
        for (states, actions, p) in &paths {
            let mut du = 0.0;
            for (&s, &a) in states.iter().zip(actions) {
                let row = &base_theta[s * na..(s + 1) * na];
                let z: f64 = row.iter().map(|x| x.exp()).sum();
                for b in 0..na {
                    let ind = if a == b { 1.0 } else { 0.0 };
                    du += (ind - row[b].exp() / z) * u[s * na + b];
                }
            }
            quad += p * du * du;
        }
        fisher_gap = fisher_gap.max((rows[1].ratio / quad - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 0.2 && fisher_gap < 0.01 && secs < 30.0;
    report(
        3,
        "quadratic weight-variance growth",
        ok,
        format!("max ratio disagreement {worst:.3}, Fisher quadratic gap {fisher_gap:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_04_semi_stochastic_unbiasedness() {
    let mdp = TabularMdp::oracle();
    let est = GradientEstimator::gpomdp();
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for i in 0..10 {
        let (tr, tc) = (theta(6, 401, i, 1.0), theta(6, 402, i, 1.0));
        let (reference, current) = (softmax(&mdp, tr.clone()), softmax(&mdp, tc.clone()));
        let (_, mu) = dp_return(&mdp, &tr);
        let (_, target) = dp_return(&mdp, &tc);
        let mut expected = vec![0.0; 6];
        for (states, actions, p) in hand_enumeration(&mdp, &tc) {
            let traj = to_trajectory(&mdp, &states, &actions);
            let v = semi_stochastic_grad(&mu, &[traj], &reference, &current, &est, mdp.gamma(), DEFAULT_WEIGHT_LOG_CAP)
                .unwrap();
            expected.iter_mut().zip(&v.grad).for_each(|(e, g)| *e += p * g);
        }
        worst = worst.max(max_abs_diff(&expected, &target));
    }
    let secs = start.elapsed().as_secs_f64();
    report(4, "semi-stochastic unbiasedness", worst < 1e-10 && secs < 30.0, format!("max residual {worst:.2e}, {secs:.2}s"));
}

fn central_difference(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

#[test]
fn criterion_05_gradient_correctness() {
    let h = 1e-5;
    let mut score_err = 0.0f64;
    let families: Vec<(Architecture, Vec<f64>, Vec<f64>)> = vec![
        (Architecture::GaussianLinear { state_dim: 4, action_dim: 1, sigma: 0.7, feature_clip: 5.0 }, vec![0.2, -0.9, 0.04, 0.5], vec![0.3]),
        (Architecture::GaussianLinear { state_dim: 2, action_dim: 2, sigma: 1.3, feature_clip: 5.0 }, vec![-0.4, 0.02], vec![0.3, -1.0]),
        (Architecture::GaussianMlp { state_dim: 4, action_dim: 1, hidden: 8, sigma: 2.0, input_clip: 10.0 }, vec![0.01, 0.5, -0.03, -0.2], vec![-0.8]),
        (Architecture::GaussianMlp { state_dim: 2, action_dim: 1, hidden: 16, sigma: 1.0, input_clip: 10.0 }, vec![-0.5, 0.01], vec![0.4]),
        (Architecture::SoftmaxTabular { num_states: 3, num_actions: 2 }, vec![2.0], vec![0.0]),
    ];
    for (k, (arch, s, a)) in families.into_iter().enumerate() {
        for j in 0..5 {
            let t = theta(arch.dim(), 501 + k as u64, j, 0.8);
            let p = Policy::new(arch.clone(), t.clone()).unwrap();
            let fd = central_difference(&t, h, |x| p.with_theta(x.to_vec()).unwrap().log_prob(&s, &a).unwrap());
            score_err = score_err.max(rel_err(&p.score(&s, &a).unwrap(), &fd));
        }
    }
    let mdp = TabularMdp::oracle();
    let mut est_err = 0.0f64;
    for j in 0..5 {
        let t = theta(6, 510, j, 1.0);
        // J from the dynamic program, differentiated numerically.
        let fd = central_difference(&t, h, |x| dp_return(&mdp, x).0);
        let p = softmax(&mdp, t);
        for est in [GradientEstimator::reinforce(), GradientEstimator::gpomdp()] {
            est_err = est_err.max(rel_err(&expected_estimate(&mdp, &p, &est).unwrap(), &fd));
        }
    }
    let ok = score_err < 1e-5 && est_err < 1e-5;
    report(5, "gradient correctness", ok, format!("score rel err {score_err:.2e}, estimator rel err {est_err:.2e}"));
}

#[test]
fn criterion_06_theorem_bound() {
    let start = std::time::Instant::now();
    let mdp = TabularMdp::bandit(&[1.0, 0.0], 0.5).unwrap();
    let c = bandit_constants(&mdp).unwrap();
    let sched = schedule(0.05, &c, 1.0, 1.0).unwrap();
    // Closed forms for two arms paying (1, 0): ∇J = p(1-p)(1, -1) and the
    // GPOMDP trace-covariance 2p(1-p)³, maximal at p = 1/4.
    let sigma_sq = 2.0 * 0.25 * 0.75f64.powi(3);
    let j_gap = 1.0 - 0.5;
    let bound = 8.0 * j_gap / (sched.eta * sched.s as f64 * sched.m as f64) + 6.0 * sigma_sq / sched.n as f64;
    let problem = Problem::tabular(mdp.clone());
    let initial = softmax(&mdp, vec![0.0, 0.0]);
    let mut total = 0.0;
    for seed in 0..50 {
        let mut cfg = SvrpgConfig::new(sched.s, sched.m, sched.eta, sched.n, sched.b);
        cfg.seed = seed;
        let out = svrpg_run(&cfg, &problem, &initial, &mut NoEvaluation).unwrap();
        let (a, b) = (out.uniform_iterate[0], out.uniform_iterate[1]);
        let p = 1.0 / (1.0 + (b - a).exp());
        total += 2.0 * (p * (1.0 - p)).powi(2);
    }
    let measured = total / 50.0;
    let secs = start.elapsed().as_secs_f64();
    let ok = measured <= bound && secs < 120.0 && c.sigma.powi(2) <= sigma_sq + 1e-12;
    report(
        6,
        "theorem bound",
        ok,
        format!(
            "mean |grad J|^2 {measured:.4} <= bound {bound:.4} (S={}, m={}, N={}, B={}, eta={:.4}), {secs:.2}s",
            sched.s, sched.m, sched.n, sched.b, sched.eta
        ),
    );
}

#[test]
fn criterion_07_sample_complexity_slope() {
    let c = example_constants();
    let eps = [0.1, 0.05, 0.02, 0.01];
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .map(|&e| {
            let s = schedule(e, &c, 1.0, 1.0).unwrap();
            let budget = (s.s * s.n + s.s * s.m * s.b) as f64;
            (e.ln(), budget.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    let (lo, hi) = (-5.0 / 3.0 - 0.15, -5.0 / 3.0 + 0.15);
    report(
        7,
        "sample-complexity slope",
        (lo..=hi).contains(&slope),
        format!("slope {slope:.3}, required [{lo:.3}, {hi:.3}]"),
    );
}

fn hits(metrics: &svrpg::harness::RunMetrics) -> Vec<Option<u64>> {
    metrics.summary.seeds.iter().map(|s| s.trajectories_to_threshold).collect()
}

fn fmt_median(m: Option<f64>) -> String {
    m.map_or("never".into(), |v| format!("{v:.1}"))
}

#[test]
fn criterion_08_algorithm_comparison() {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let svrpg_cfg = RunConfig { output_dir: dir.path().join("svrpg"), ..presets::cartpole_svrpg() };
    let gpomdp_cfg = RunConfig { output_dir: dir.path().join("gpomdp"), ..presets::cartpole_gpomdp() };
    assert_eq!((svrpg_cfg.batch_size, svrpg_cfg.mini_batch_size, svrpg_cfg.eta), (25, Some(10), 0.06));
    assert_eq!((gpomdp_cfg.batch_size, gpomdp_cfg.eta, gpomdp_cfg.horizon), (10, 0.01, 200));
    let s = run_experiment(&svrpg_cfg).unwrap();
    let g = run_experiment(&gpomdp_cfg).unwrap();
    let (ms, mg) = (censored_median(&hits(&s)), censored_median(&hits(&g)));
    let ok = match (ms, mg) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "cart-pole algorithm comparison",
        ok && secs < 900.0,
        format!("median trajectories-to-threshold svrpg {} vs gpomdp {}, {secs:.0}s", fmt_median(ms), fmt_median(mg)),
    );
}

/// One-sided exact permutation p-value that `a` tends to be smaller than
/// `b`, on mid-ranks (never-reached counts as the largest value).
fn rank_sum_p_value(a: &[Option<u64>], b: &[Option<u64>]) -> f64 {
    let key = |x: &Option<u64>| x.map_or(f64::INFINITY, |v| v as f64);
    let pooled: Vec<f64> = a.iter().chain(b).map(key).collect();
    let n = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|x| {
            let less = pooled.iter().filter(|y| *y < x).count() as f64;
            let equal = pooled.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = ranks[..a.len()].iter().sum();
    let (mut extreme, mut total) = (0u64, 0u64);
    // All subsets of size |a| by bitmask.
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        total += 1;
        if s <= observed + 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

#[test]
fn criterion_09_minibatch_sweep() {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig { output_dir: dir.path().join("sweep"), ..presets::cartpole_svrpg() };
    let report_ = sweep_minibatch(&base, &[5, 10, 20], &[0.01, 0.02, 0.03]).unwrap();
    let ten = &report_.entries[1];
    assert_eq!(ten.mini_batch_size, 10);
    let key = |m: Option<f64>| m.unwrap_or(f64::INFINITY);
    let mut ok = true;
    let mut parts = Vec::new();
    for e in &report_.entries {
        parts.push(format!("B={} median {}", e.mini_batch_size, fmt_median(e.median_trajectories_to_threshold)));
        if e.mini_batch_size == 10 {
            continue;
        }
        let p = rank_sum_p_value(&e.trajectories_to_threshold, &ten.trajectories_to_threshold);
        parts.push(format!("p(B={} < B=10) {p:.3}", e.mini_batch_size));
        if key(e.median_trajectories_to_threshold) < key(ten.median_trajectories_to_threshold) && p < 0.05 {
            ok = false;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(9, "cart-pole mini-batch sweep", ok && secs < 1800.0, format!("{}, {secs:.0}s", parts.join(", ")));
}

#[test]
fn criterion_10_proposition_bounds() {
    let (horizon, gamma, sigma, clip) = (100usize, 0.99, 1.0, 3.0);
    let problem = Problem::new(Environment::from_name("cartpole").unwrap(), horizon, gamma).unwrap();
    let arch = Architecture::GaussianLinear { state_dim: 4, action_dim: 1, sigma, feature_clip: clip };
    let t0 = theta(5, 1001, 0, 0.5);
    let policy = Policy::new(arch, t0.clone()).unwrap();
    let trajs = sample_batch(&problem, &policy, 10_000, 1002, Purpose::Probe, 0, 0).unwrap();
    let phi = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| v.clamp(-clip, clip)).chain([1.0]).collect() };
    // Closed forms: score (a − θᵀφ)φ/σ², Hessian −φφᵀ/σ².
    let (mut g_max, mut m_max) = (0.0f64, 0.0f64);
    let mut pairs = Vec::new();
    for t in &trajs {
        for (s, a, _) in t.steps() {
            let f = phi(s);
            let fn2: f64 = f.iter().map(|x| x * x).sum();
            let mean: f64 = t0.iter().zip(&f).map(|(w, x)| w * x).sum();
            g_max = g_max.max((a[0] - mean).abs() * fn2.sqrt() / (sigma * sigma));
            m_max = m_max.max(fn2 / (sigma * sigma));
            pairs.push((s.to_vec(), a.to_vec()));
        }
    }
    let mut it = pairs.iter().cloned();
    let measured = estimate_score_bounds(&policy, pairs.len(), || it.next().unwrap()).unwrap();
    let (r, b) = (1.0, 0.0);
    let c_g = horizon as f64 * g_max * (r + b) / (1.0 - gamma);
    let l_g = horizon as f64 * m_max * (r + b) / (1.0 - gamma);
    let est = GradientEstimator::gpomdp();
    let slack = 1.0 + 1e-9;
    let mut norm_viol = 0;
    let mut max_norm = 0.0f64;
    for t in &trajs {
        let n = est.grad(t, &policy, gamma).unwrap().iter().map(|x| x * x).sum::<f64>().sqrt();
        max_norm = max_norm.max(n);
        norm_viol += usize::from(n > c_g * slack);
    }
    let mut lip_viol = 0;
    let mut max_ratio = 0.0f64;
    for p in 0..100u64 {
        let th1 = theta(5, 1003, p, 0.5);
        let u = random_direction(5, 1004, p);
        let dist = stream(1005, Purpose::Misc, 0, 0, p).random::<f64>();
        let th2: Vec<f64> = th1.iter().zip(&u).map(|(x, y)| x + dist * y).collect();
        let (p1, p2) = (policy.with_theta(th1).unwrap(), policy.with_theta(th2).unwrap());
        for t in trajs.iter().skip(p as usize * 100).take(100) {
            let g1 = est.grad(t, &p1, gamma).unwrap();
            let g2 = est.grad(t, &p2, gamma).unwrap();
            let diff = g1.iter().zip(&g2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            max_ratio = max_ratio.max(diff / dist);
            lip_viol += usize::from(diff > l_g * dist * slack);
        }
    }
    let bounds_agree = (measured.g - g_max).abs() <= 1e-12 * g_max && (measured.m - m_max).abs() <= 1e-5 * m_max;
    let ok = norm_viol == 0 && lip_viol == 0 && bounds_agree;
    report(
        10,
        "proposition bounds",
        ok,
        format!(
            "G {g_max:.3}, M {m_max:.3}, max |g| {max_norm:.1} <= C_g {c_g:.1}, max ratio {max_ratio:.1} <= L_g {l_g:.1}, \
             violations {norm_viol}+{lip_viol}, estimator agrees {bounds_agree}"
        ),
    );
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = Vec::new();
    for (name, mut cfg) in [
        ("svrpg", presets::cartpole_svrpg()),
        ("gpomdp", presets::cartpole_gpomdp()),
        ("reinforce", presets::cartpole_reinforce()),
        ("mountaincar", presets::mountaincar_svrpg()),
    ] {
        cfg.budget = 300;
        cfg.horizon = 60;
        cfg.seeds = vec![0, 7];
        configs.push((name, cfg));
    }
    let mut identical = true;
    let mut files = 0;
    for (name, cfg) in configs {
        let a = RunConfig { output_dir: dir.path().join(format!("{name}-a")), ..cfg.clone() };
        let b = RunConfig { output_dir: dir.path().join(format!("{name}-b")), ..cfg };
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        for f in ["seed_0.csv", "seed_7.csv", "aggregate.csv"] {
            let x = std::fs::read(a.output_dir.join(f)).unwrap();
            let y = std::fs::read(b.output_dir.join(f)).unwrap();
            identical &= !x.is_empty() && x == y;
            files += 1;
        }
    }
    report(11, "determinism", identical, format!("{files} metrics files compared byte for byte"));
}
