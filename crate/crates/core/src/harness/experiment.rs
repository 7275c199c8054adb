use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use crate::env::Problem;
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum_scalars;
use crate::policy::Policy;
use crate::variance_reduction::{sg_run, svrpg_run, Evaluator, MetricsRow, RolloutEvaluator, RunOutput};

pub const METRICS_HEADER: [&str; 7] = [
    "epoch",
    "iter",
    "trajectories_consumed",
    "avg_return",
    "grad_norm_proxy",
    "weight_clip_count",
    "step_size",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub trajectories_to_threshold: Option<u64>,
    pub final_return: Option<f64>,
    pub uniform_iterate_return: Option<f64>,
    pub trajectories_consumed: u64,
    pub updates: usize,
    pub weight_clips: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub summary: SeedSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub trajectories: u64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub threshold: Option<f64>,
    /// `None` when the median run never reached the threshold.
    pub median_trajectories_to_threshold: Option<f64>,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub output_dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
    pub summary: RunSummary,
}

/// Median of values where `None` stands for "never"; `None` if the median
/// itself is never reached.
pub fn censored_median(values: &[Option<u64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |t| t as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let med = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    med.is_finite().then_some(med)
}

/// Value of a step function `(x, y)` (sorted by `x`) at `x`, holding the
/// last value; `None` before the first point.
pub fn step_value(series: &[(u64, f64)], x: u64) -> Option<f64> {
    let i = series.partition_point(|(t, _)| *t <= x);
    (i > 0).then(|| series[i - 1].1)
}

/// Mean and sample standard deviation of the values present at `x`.
pub fn step_stats(series: &[&[(u64, f64)]], x: u64) -> (f64, f64, usize) {
    let values: Vec<f64> = series.iter().filter_map(|s| step_value(s, x)).collect();
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = pairwise_sum_scalars(&values) / n as f64;
    let std = if n > 1 {
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum_scalars(&sq) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std, n)
}

/// Mean and standard deviation across seeds on the union of every seed's
/// checkpoints. Curves are treated as step functions; the result does not
/// depend on the order of `runs`.
pub fn aggregate(runs: &[(u64, Vec<MetricsRow>)]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&(u64, Vec<MetricsRow>)> = runs.iter().collect();
    sorted.sort_by_key(|(seed, _)| *seed);
    let series: Vec<Vec<(u64, f64)>> = sorted
        .iter()
        .map(|(_, rows)| rows.iter().map(|r| (r.trajectories_consumed, r.avg_return)).collect())
        .collect();
    let refs: Vec<&[(u64, f64)]> = series.iter().map(Vec::as_slice).collect();
    let mut grid: Vec<u64> = series.iter().flatten().map(|(x, _)| *x).collect();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .map(|x| {
            let (mean, std, seeds) = step_stats(&refs, x);
            AggregateRow { trajectories: x, mean, std, seeds }
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["trajectories", "mean", "std", "seeds"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Train one seed of `config`.
pub fn run_seed(config: &RunConfig, problem: &Problem, seed: u64) -> Result<SeedRun> {
    let initial = Policy::initialize(config.policy.clone(), seed)?;
    let mut evaluator =
        RolloutEvaluator { problem, rollouts: config.evaluation.rollouts, seed: config.evaluation.seed };
    let out: RunOutput = match config.algorithm {
        Algorithm::Svrpg => svrpg_run(&config.svrpg_config(seed), problem, &initial, &mut evaluator)?,
        Algorithm::Reinforce | Algorithm::Gpomdp => {
            sg_run(&config.sg_config(seed), problem, &initial, &mut evaluator)?
        }
    };
    let threshold = config.threshold();
    let trajectories_to_threshold = threshold.and_then(|t| {
        out.rows.iter().find(|r| r.avg_return >= t).map(|r| r.trajectories_consumed)
    });
    let uniform_iterate_return = if out.rows.is_empty() {
        None
    } else {
        Some(evaluator.average_return(&initial.with_theta(out.uniform_iterate.clone())?)?)
    };
    let summary = SeedSummary {
        seed,
        trajectories_to_threshold,
        final_return: out.rows.last().map(|r| r.avg_return),
        uniform_iterate_return,
        trajectories_consumed: out.trajectories_consumed,
        updates: out.rows.len().saturating_sub(1),
        weight_clips: out.clip_count,
    };
    Ok(SeedRun { seed, rows: out.rows, summary })
}

/// Run every seed of `config` in parallel and write
/// `config.json`, `seed_<k>.csv`, `aggregate.csv` and `summary.json`.
pub fn run_experiment(config: &RunConfig) -> Result<RunMetrics> {
    let problem = config.validate()?;
    let out_dir = config.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;
    let mut resolved = config.clone();
    resolved.output_dir = out_dir.clone();
    resolved.evaluation.threshold = config.threshold();
    fs::write(out_dir.join("config.json"), resolved.to_json()?)?;

    let mut runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = run_seed(config, &problem, seed)?;
            write_metrics_csv(&out_dir.join(seed_file_name(seed)), &run.rows)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);

    let pairs: Vec<(u64, Vec<MetricsRow>)> = runs.iter().map(|r| (r.seed, r.rows.clone())).collect();
    let agg = aggregate(&pairs);
    write_aggregate_csv(&out_dir.join("aggregate.csv"), &agg)?;
    let seeds: Vec<SeedSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let hits: Vec<Option<u64>> = seeds.iter().map(|s| s.trajectories_to_threshold).collect();
    let summary = RunSummary {
        label: config.label(),
        algorithm: config.algorithm,
        threshold: config.threshold(),
        median_trajectories_to_threshold: censored_median(&hits),
        seeds,
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunMetrics { output_dir: out_dir, runs, aggregate: agg, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mini_batch_size: usize,
    pub eta: f64,
    pub output_dir: PathBuf,
    pub median_trajectories_to_threshold: Option<f64>,
    pub trajectories_to_threshold: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Indices into `entries`, best first.
    pub ranking: Vec<usize>,
}

/// The configuration of one sweep point.
pub fn sweep_point(base: &RunConfig, b: usize, eta: f64) -> RunConfig {
    RunConfig {
        label: Some(format!("svrpg B={b}")),
        mini_batch_size: Some(b),
        eta,
        output_dir: base.output_dir.join(format!("B{b}_eta{eta}")),
        ..base.clone()
    }
}

/// Run SVRPG once per `(B, η)` pair and rank by median
/// trajectories-to-threshold.
pub fn sweep_minibatch(base: &RunConfig, bs: &[usize], etas: &[f64]) -> Result<SweepReport> {
    if bs.len() != etas.len() {
        return Err(Error::InvalidConfig(format!("{} mini-batch sizes but {} step sizes", bs.len(), etas.len())));
    }
    if bs.is_empty() {
        return Err(Error::InvalidConfig("empty sweep".into()));
    }
    if base.algorithm != Algorithm::Svrpg {
        return Err(Error::InvalidConfig("mini-batch sweeps need an svrpg config".into()));
    }
    let points: Vec<RunConfig> = bs.iter().zip(etas).map(|(&b, &eta)| sweep_point(base, b, eta)).collect();
    for p in &points {
        p.validate()?;
    }
    let mut entries = Vec::with_capacity(points.len());
    for p in &points {
        let metrics = run_experiment(p)?;
        entries.push(SweepEntry {
            mini_batch_size: p.mini_batch_size.unwrap_or_default(),
            eta: p.eta,
            output_dir: metrics.output_dir,
            median_trajectories_to_threshold: metrics.summary.median_trajectories_to_threshold,
            trajectories_to_threshold: metrics.summary.seeds.iter().map(|s| s.trajectories_to_threshold).collect(),
        });
    }
    let mut ranking: Vec<usize> = (0..entries.len()).collect();
    ranking.sort_by(|&a, &b| {
        let key = |i: usize| entries[i].median_trajectories_to_threshold.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    let report = SweepReport { entries, ranking };
    let root = base.resolved_output_dir();
    fs::create_dir_all(&root)?;
    fs::write(root.join("sweep_summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
