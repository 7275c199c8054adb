use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiment::{read_metrics_csv, seed_file_name, step_stats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub algorithm: String,
    pub seed: u64,
    pub x: u64,
    pub y: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

/// Run directories under `input`: the directory itself when it holds a
/// `config.json`, otherwise its immediate children that do.
pub fn discover_runs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.join("config.json").is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut found = Vec::new();
    if input.is_dir() {
        for entry in std::fs::read_dir(input)? {
            let path = entry?.path();
            if path.join("config.json").is_file() {
                found.push(path);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::MissingFiles(vec![input.join("config.json")]));
    }
    Ok(found)
}

/// Trailing moving average over `window` points.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Tidy plot data `(algorithm, seed, x, y, y_mean, y_std)` for every run
/// under `inputs`. `y` is the smoothed average return; the band columns are
/// taken across seeds of the same algorithm at each `x`.
pub fn collect_plot_data(inputs: &[PathBuf], window: usize) -> Result<Vec<PlotRow>> {
    if window == 0 {
        return Err(Error::InvalidArgument("smoothing window must be at least 1".into()));
    }
    let mut missing = Vec::new();
    let mut runs = Vec::new();
    for input in inputs {
        match discover_runs(input) {
            Ok(dirs) => runs.extend(dirs),
            Err(Error::MissingFiles(m)) => missing.extend(m),
            Err(e) => return Err(e),
        }
    }
    let mut groups: BTreeMap<String, Vec<(u64, Vec<(u64, f64)>)>> = BTreeMap::new();
    for dir in &runs {
        let cfg = RunConfig::from_path(dir.join("config.json"))?;
        for &seed in &cfg.seeds {
            let path = dir.join(seed_file_name(seed));
            if !path.is_file() {
                missing.push(path);
                continue;
            }
            let rows = read_metrics_csv(&path)?;
            let ys = smooth(&rows.iter().map(|r| r.avg_return).collect::<Vec<_>>(), window);
            let series = rows.iter().map(|r| r.trajectories_consumed).zip(ys).collect();
            groups.entry(cfg.label()).or_default().push((seed, series));
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingFiles(missing));
    }
    let mut out = Vec::new();
    for (label, mut seeds) in groups {
        seeds.sort_by_key(|(s, _)| *s);
        let refs: Vec<&[(u64, f64)]> = seeds.iter().map(|(_, s)| s.as_slice()).collect();
        for (seed, series) in &seeds {
            for &(x, y) in series {
                let (y_mean, y_std, _) = step_stats(&refs, x);
                out.push(PlotRow { algorithm: label.clone(), seed: *seed, x, y, y_mean, y_std });
            }
        }
    }
    Ok(out)
}

/// Write [`collect_plot_data`] to `out` as CSV; returns the row count.
pub fn emit_plot_data(inputs: &[PathBuf], out: &Path, window: usize) -> Result<usize> {
    let rows = collect_plot_data(inputs, window)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out)?;
    w.write_record(["algorithm", "seed", "x", "y", "y_mean", "y_std"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}
