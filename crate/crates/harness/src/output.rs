//! Writes experiment results: `runs.jsonl`, `aggregate.csv`, `long.csv`,
//! `intensity.jsonl` and `intensity.csv` for intensity studies,
//! `manifest.json`, and `failures.json` when any run failed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bfarl_core::metrics::MetricsReport;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::runner::{ExperimentOutput, Stat};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

fn jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn std_field(s: &Stat) -> String {
    s.std.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    runs: usize,
    failures: usize,
    config: &'a ExperimentConfig,
}

/// Writes all outputs into `dir` and returns the paths written.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("runs.jsonl");
    jsonl(&path, &out.records)?;
    written.push(path);

    let path = dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["cell".to_string(), "grid_value".into(), "method".into(), "n".into()];
    for m in MetricsReport::METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for row in &out.aggregates {
        let n = row.metrics.values().next().map_or(0, |s| s.n);
        let mut rec = vec![row.cell.to_string(), row.grid_value.to_string(), row.method.clone(), n.to_string()];
        for m in MetricsReport::METRICS {
            let s = &row.metrics[m];
            rec.push(s.mean.to_string());
            rec.push(std_field(s));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);

    let path = dir.join("long.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["grid_value", "method", "metric", "mean", "std"])?;
    for row in &out.aggregates {
        for m in MetricsReport::METRICS {
            let s = &row.metrics[m];
            w.write_record([row.grid_value.to_string(), row.method.clone(), m.to_string(), s.mean.to_string(), std_field(s)])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);

    if !out.intensity.is_empty() {
        let path = dir.join("intensity.jsonl");
        jsonl(&path, &out.intensity)?;
        written.push(path);

        let path = dir.join("intensity.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["point".to_string(), "beta_norm".into(), "beta_0".into(), "beta_1".into(), "n".into()];
        for m in MetricsReport::METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header)?;
        for row in &out.curve {
            let n = row.metrics.values().next().map_or(0, |s| s.n);
            let mut rec = vec![
                row.point.to_string(),
                row.beta_norm.to_string(),
                row.beta[0].to_string(),
                row.beta[1].to_string(),
                n.to_string(),
            ];
            for m in MetricsReport::METRICS {
                let s = &row.metrics[m];
                rec.push(s.mean.to_string());
                rec.push(std_field(s));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }

    let path = dir.join("manifest.json");
    let manifest = Manifest {
        config_hash: &out.config_hash,
        runs: out.records.len(),
        failures: out.failures.len(),
        config: cfg,
    };
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);

    let path = dir.join("failures.json");
    if out.failures.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(|e| HarnessError::io(&path, e))?;
        }
    } else {
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &out.failures)?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
