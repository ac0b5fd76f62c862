//! Writing experiment outputs: long CSV, aggregate CSV, extra tables and a
//! JSON manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiments::{fmt, ExperimentOutput, Record};
use super::scenario::Scenario;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version string for manifests: the crate version plus `git describe`
/// output when it was supplied at build time.
pub fn version_string() -> String {
    match option_env!("OTFS_ISAC_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{VERSION}+{g}"),
        _ => VERSION.to_string(),
    }
}

/// Mean and spread of one `(snr_db, metric)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub snr_db: f64,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

/// Groups records by `(snr_db, metric)` in first-seen order.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut index: HashMap<(u64, &str), usize> = HashMap::new();
    let mut groups: Vec<(f64, &str, Vec<f64>)> = Vec::new();
    for r in records {
        let key = (r.snr_db.to_bits(), r.metric.as_str());
        let i = *index.entry(key).or_insert_with(|| {
            groups.push((r.snr_db, r.metric.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[i].2.push(r.value);
    }
    groups
        .into_iter()
        .map(|(snr_db, metric, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let std_dev = var.sqrt();
            let std_err = std_dev / (n as f64).sqrt();
            Aggregate {
                snr_db,
                metric: metric.to_string(),
                count: n,
                mean,
                std_dev,
                std_err,
                ci95_low: mean - 1.96 * std_err,
                ci95_high: mean + 1.96 * std_err,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    experiment: &'a str,
    version: String,
    seed: u64,
    trials: usize,
    files: Vec<String>,
    scenario: &'a Scenario,
}

/// Writes everything under `dir` (created if needed) and returns the paths.
pub fn write_outputs(scenario: &Scenario, out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let long = dir.join("records.csv");
    let mut w = csv::Writer::from_path(&long)?;
    w.write_record(["snr_db", "trial", "metric", "value"])?;
    for r in &out.records {
        w.write_record([fmt(r.snr_db), r.trial.to_string(), r.metric.clone(), fmt(r.value)])?;
    }
    w.flush()?;
    files.push(long);

    let agg = dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&agg)?;
    w.write_record(["snr_db", "metric", "count", "mean", "std_dev", "std_err", "ci95_low", "ci95_high"])?;
    for a in aggregate(&out.records) {
        w.write_record([
            fmt(a.snr_db),
            a.metric,
            a.count.to_string(),
            fmt(a.mean),
            fmt(a.std_dev),
            fmt(a.std_err),
            fmt(a.ci95_low),
            fmt(a.ci95_high),
        ])?;
    }
    w.flush()?;
    files.push(agg);

    for t in &out.tables {
        let path = dir.join(&t.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.headers)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        files.push(path);
    }

    let manifest_path = dir.join("manifest.json");
    let names = files
        .iter()
        .chain(std::iter::once(&manifest_path))
        .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let manifest = Manifest {
        name: &scenario.name,
        experiment: scenario.experiment.name(),
        version: version_string(),
        seed: scenario.system.seed,
        trials: scenario.trials,
        files: names,
        scenario,
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    files.push(manifest_path);
    Ok(files)
}
