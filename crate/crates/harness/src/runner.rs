//! Runs every (grid point, repetition) of an experiment and aggregates them.

use std::collections::BTreeMap;

use bfarl_core::bias::inject_bias;
use bfarl_core::data::{split, standardize_split, Dataset};
use bfarl_core::losses::{pooled_marginal, MetaParams, PeerLoss};
use bfarl_core::meta::{fit_fixed_meta, fit_with_loss, train};
use bfarl_core::metrics::MetricsReport;
use bfarl_core::model::ModelParams;
use bfarl_core::rng::derive_seed;
use bfarl_core::synthetic::generate;
use bfarl_core::{data::load_csv, BiasSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentConfig, ExperimentKind, Method};
use crate::error::{HarnessError, Result};

/// Final meta parameters of a meta-learned run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaSummary {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub beta_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub cell: usize,
    pub grid_value: f64,
    pub rep: usize,
    /// Training seed shared by every method of this run.
    pub seed: u64,
    pub split_seed: u64,
    pub bias_seed: u64,
    pub n_train: usize,
    /// Rows removed by selection bias.
    pub removed: usize,
    /// Test labels equal the clean labels they were drawn from.
    pub test_is_clean: bool,
    pub metrics: BTreeMap<String, MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSummary>,
}

/// One point of the regularization-intensity ray for one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityRecord {
    pub config_hash: String,
    pub rep: usize,
    pub point: usize,
    pub seed: u64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub beta_norm: f64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell: usize,
    pub rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Stat { n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub grid_value: f64,
    pub method: String,
    pub metrics: BTreeMap<String, Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub point: usize,
    pub beta: [f64; 2],
    pub beta_norm: f64,
    pub metrics: BTreeMap<String, Stat>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub intensity: Vec<IntensityRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub curve: Vec<CurveRow>,
    pub failures: Vec<Failure>,
}

/// Loaded once per experiment; synthetic data is regenerated per repetition.
enum Source {
    Synthetic,
    Table(Box<Dataset>),
}

fn load_source(cfg: &ExperimentConfig) -> Result<Source> {
    if cfg.is_synthetic() {
        Ok(Source::Synthetic)
    } else {
        Ok(Source::Table(Box::new(load_csv(&cfg.recipe()?)?)))
    }
}

/// Train split carrying clean labels in `z` and test split whose observed
/// labels are the clean ones.
struct Split {
    train: Dataset,
    test: Dataset,
    seed: u64,
}

fn prepare(cfg: &ExperimentConfig, source: &Source, rep: usize) -> Result<Split> {
    let rep = rep as u64;
    let split_seed = derive_seed(cfg.seed, &[rep, 1]);
    let full = match source {
        Source::Synthetic => generate(&cfg.synthetic(derive_seed(cfg.seed, &[rep, 0])))?.data,
        Source::Table(d) => (**d).clone(),
    };
    let full = if full.z().is_none() {
        let z = full.y().to_vec();
        full.with_clean_labels(Some(z))?
    } else {
        full
    };
    let (train, test) = split(&full, cfg.train_fraction, split_seed)?;
    let (mut train, test) = standardize_split(&train, &test)?;
    let mut test = test.clean_view()?;
    if cfg.include_sensitive {
        train = train.with_sensitive_feature();
        test = test.with_sensitive_feature();
    }
    Ok(Split {
        train,
        test,
        seed: split_seed,
    })
}

fn is_trivial(spec: &BiasSpec) -> bool {
    spec.thetas().iter().all(|&t| t == 0.0) && spec.sigma == 1.0
}

/// Training labels after the cell's bias; untouched when the cell has none.
fn biased_train(train: &Dataset, spec: &BiasSpec, seed: u64) -> Result<(Dataset, usize)> {
    if is_trivial(spec) {
        Ok((train.clone(), 0))
    } else {
        Ok(inject_bias(train, spec, seed)?)
    }
}

struct Seeds {
    bias: u64,
    train: u64,
}

fn seeds(cfg: &ExperimentConfig, cell: usize, rep: usize) -> Seeds {
    let (c, r) = (cell as u64, rep as u64);
    Seeds {
        bias: derive_seed(cfg.seed, &[c, r, 2]),
        train: derive_seed(cfg.seed, &[c, r, 3]),
    }
}

fn fit(
    cfg: &ExperimentConfig,
    method: Method,
    train_set: &Dataset,
    biased: &Dataset,
    seed: u64,
) -> Result<(ModelParams, Option<MetaSummary>)> {
    let tcfg = cfg.train_config(seed);
    let identity = MetaParams::default();
    Ok(match method {
        Method::Clean => (fit_fixed_meta(&train_set.clean_view()?, &tcfg, &identity)?, None),
        Method::Biased => (fit_fixed_meta(biased, &tcfg, &identity)?, None),
        Method::Bfarl => {
            let (params, meta, _) = train(biased, &tcfg, &identity)?;
            let summary = MetaSummary {
                alpha: meta.alpha,
                beta: meta.beta,
                beta_norm: meta.beta_norm(),
            };
            (params, Some(summary))
        }
        Method::Peer => {
            let loss = PeerLoss::new(biased, pooled_marginal(biased)?, cfg.peer_alpha);
            (fit_with_loss(biased, &tcfg, &loss)?, None)
        }
    })
}

fn run_one(cfg: &ExperimentConfig, hash: &str, cell: &Cell, rep: usize, data: &Split) -> Result<RunRecord> {
    let s = seeds(cfg, cell.index, rep);
    let (biased, removed) = biased_train(&data.train, &cell.bias, s.bias)?;
    let mut metrics = BTreeMap::new();
    let mut meta = None;
    for &method in &cfg.methods {
        let (params, summary) = fit(cfg, method, &data.train, &biased, s.train)?;
        meta = meta.or(summary);
        metrics.insert(method.name().to_string(), MetricsReport::evaluate(&params, &data.test, s.train)?);
    }
    Ok(RunRecord {
        config_hash: hash.to_string(),
        cell: cell.index,
        grid_value: cell.grid_value,
        rep,
        seed: s.train,
        split_seed: data.seed,
        bias_seed: s.bias,
        n_train: biased.len(),
        removed,
        test_is_clean: Some(data.test.y()) == data.test.z(),
        metrics,
        meta,
    })
}

/// `(α, β)` at each point of the intensity ray.
pub fn ray(cfg: &ExperimentConfig) -> Vec<MetaParams> {
    let d = cfg.beta_direction;
    let norm = d[0].hypot(d[1]);
    cfg.beta_norms
        .iter()
        .map(|&n| MetaParams {
            alpha: cfg.intensity_alpha,
            beta: [n * d[0] / norm, n * d[1] / norm],
        })
        .collect()
}

fn run_intensity_point(
    cfg: &ExperimentConfig,
    hash: &str,
    cell: &Cell,
    rep: usize,
    point: usize,
    meta: &MetaParams,
    data: &Split,
) -> Result<IntensityRecord> {
    // Same bias draw and training seed as the biased baseline of this rep.
    let s = seeds(cfg, cell.index, rep);
    let (biased, _) = biased_train(&data.train, &cell.bias, s.bias)?;
    let params = fit_fixed_meta(&biased, &cfg.train_config(s.train), meta)?;
    Ok(IntensityRecord {
        config_hash: hash.to_string(),
        rep,
        point,
        seed: s.train,
        alpha: meta.alpha,
        beta: meta.beta,
        beta_norm: meta.beta_norm(),
        metrics: MetricsReport::evaluate(&params, &data.test, s.train)?,
    })
}

fn metric_stats<'a>(reports: impl Iterator<Item = &'a MetricsReport> + Clone) -> BTreeMap<String, Stat> {
    MetricsReport::METRICS
        .iter()
        .map(|&m| {
            let values: Vec<f64> = reports.clone().map(|r| r.get(m).expect("known metric")).collect();
            (m.to_string(), Stat::of(&values))
        })
        .collect()
}

/// Mean and sample std per (cell, method, metric), skipping failed cells.
pub fn aggregate(cfg: &ExperimentConfig, records: &[RunRecord], failures: &[Failure]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for cell in cfg.cells() {
        if failures.iter().any(|f| f.cell == cell.index) {
            continue;
        }
        let in_cell: Vec<&RunRecord> = records.iter().filter(|r| r.cell == cell.index).collect();
        if in_cell.is_empty() {
            continue;
        }
        for method in &cfg.methods {
            let name = method.name();
            rows.push(AggregateRow {
                cell: cell.index,
                grid_value: cell.grid_value,
                method: name.to_string(),
                metrics: metric_stats(in_cell.iter().map(|r| &r.metrics[name])),
            });
        }
    }
    rows
}

pub fn aggregate_curve(cfg: &ExperimentConfig, records: &[IntensityRecord], failures: &[Failure]) -> Vec<CurveRow> {
    if failures.iter().any(|f| f.point.is_some()) {
        return Vec::new();
    }
    ray(cfg)
        .iter()
        .enumerate()
        .filter_map(|(point, meta)| {
            let at: Vec<&IntensityRecord> = records.iter().filter(|r| r.point == point).collect();
            (!at.is_empty()).then(|| CurveRow {
                point,
                beta: meta.beta,
                beta_norm: meta.beta_norm(),
                metrics: metric_stats(at.iter().map(|r| &r.metrics)),
            })
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

/// Runs the experiment on `jobs` threads (0 = one per core). Individual run
/// failures are collected rather than returned.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let source = load_source(cfg)?;
    let cells = cfg.cells();
    let pool = pool(jobs)?;

    let reps: Vec<usize> = (0..cfg.repetitions).collect();
    let splits: Vec<std::result::Result<Split, String>> = pool.install(|| {
        reps.par_iter()
            .map(|&rep| prepare(cfg, &source, rep).map_err(|e| e.to_string()))
            .collect()
    });

    let jobs_list: Vec<(&Cell, usize)> = cells.iter().flat_map(|c| reps.iter().map(move |&r| (c, r))).collect();
    let outcomes: Vec<std::result::Result<RunRecord, Failure>> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(cell, rep)| {
                let fail = |message: String| Failure {
                    cell: cell.index,
                    rep,
                    point: None,
                    message,
                };
                let data = splits[rep].as_ref().map_err(|e| fail(e.clone()))?;
                run_one(cfg, &hash, cell, rep, data).map_err(|e| fail(e.to_string()))
            })
            .collect()
    });

    let mut out = ExperimentOutput {
        config_hash: hash.clone(),
        ..Default::default()
    };
    for o in outcomes {
        match o {
            Ok(r) => out.records.push(r),
            Err(f) => out.failures.push(f),
        }
    }

    if cfg.kind == ExperimentKind::IntensityStudy {
        let cell = &cells[0];
        let points = ray(cfg);
        let grid: Vec<(usize, usize)> = reps
            .iter()
            .flat_map(|&r| (0..points.len()).map(move |p| (r, p)))
            .collect();
        let outcomes: Vec<std::result::Result<IntensityRecord, Failure>> = pool.install(|| {
            grid.par_iter()
                .map(|&(rep, point)| {
                    let fail = |message: String| Failure {
                        cell: cell.index,
                        rep,
                        point: Some(point),
                        message,
                    };
                    let data = splits[rep].as_ref().map_err(|e| fail(e.clone()))?;
                    run_intensity_point(cfg, &hash, cell, rep, point, &points[point], data)
                        .map_err(|e| fail(e.to_string()))
                })
                .collect()
        });
        for o in outcomes {
            match o {
                Ok(r) => out.intensity.push(r),
                Err(f) => out.failures.push(f),
            }
        }
        out.curve = aggregate_curve(cfg, &out.intensity, &out.failures);
    }
    out.aggregates = aggregate(cfg, &out.records, &out.failures);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDifference {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean; absent for a single pair.
    pub se: Option<f64>,
}

/// `metric(a) - metric(b)` over the runs of `cell`, paired by repetition.
pub fn paired_difference(records: &[RunRecord], cell: usize, a: &str, b: &str, metric: &str) -> Option<PairedDifference> {
    let diffs: Vec<f64> = records
        .iter()
        .filter(|r| r.cell == cell)
        .map(|r| Some(r.metrics.get(a)?.get(metric)? - r.metrics.get(b)?.get(metric)?))
        .collect::<Option<_>>()?;
    if diffs.is_empty() {
        return None;
    }
    let s = Stat::of(&diffs);
    Some(PairedDifference {
        n: s.n,
        mean: s.mean,
        se: s.std.map(|sd| sd / (s.n as f64).sqrt()),
    })
}
