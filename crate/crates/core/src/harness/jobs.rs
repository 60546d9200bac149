//! The file-driven jobs behind the `rbr` subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig};
use super::sweep::{classifier_report, load_datasets, prepare, run_sweep};
use crate::classifier::{auc, load_model, save_model, train_mlp};
use crate::data::Dataset;
use crate::recourse::{kde_recourse, robust_recourse, wachter_recourse, Method, RecourseConfig, WachterParams};
use crate::sampler::{build_local_sample_set, LocalSampleSet, SamplerConfig};
use crate::{Error, Result};

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// `train`: split the data, fit the current classifier and write
/// `model.json`, `train.json`, `test.json` and `metrics.json`.
pub fn run_train(config: &Path, out_dir: &Path) -> Result<serde_json::Value> {
    let cfg = ExperimentConfig::from_file(config)?;
    let (train, test, _) = load_datasets(&cfg)?;
    let model = train_mlp(&train, &cfg.train.with_seed(derive_seed(cfg.master_seed, "train", 0)))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_model(&model, &out_dir.join("model.json"))?;
    train.to_json_file(&out_dir.join("train.json"))?;
    test.to_json_file(&out_dir.join("test.json"))?;
    let metrics = serde_json::json!({
        "n_train": train.len(),
        "n_test": test.len(),
        "train_accuracy": model.accuracy(&train),
        "test_accuracy": model.accuracy(&test),
        "test_auc": auc(&model.scores(&test), &test.labels)?,
    });
    write_json(&out_dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleJob {
    pub model: PathBuf,
    /// Training data (dataset JSON) searched for counterfactuals.
    pub data: PathBuf,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

/// `sample`: build the local sample set for one input.
pub fn run_sample(config: &Path, out: &Path) -> Result<LocalSampleSet> {
    let job: SampleJob = read_toml(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let model = load_model(&resolve(base, &job.model))?;
    let data = Dataset::from_json_file(&resolve(base, &job.data))?;
    let ls = build_local_sample_set(&job.x0, &data, &model, &job.sampler, job.seed)?;
    ls.to_json_file(out)?;
    Ok(ls)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecourseJob {
    pub model: PathBuf,
    /// Local sample set JSON; its `x0` is the input.
    pub samples: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub recourse: RecourseConfig,
    #[serde(default)]
    pub wachter: WachterParams,
}

/// `recourse`: generate one recourse and report it with its validity.
pub fn run_recourse(config: &Path, out: &Path) -> Result<serde_json::Value> {
    let job: RecourseJob = read_toml(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let model = load_model(&resolve(base, &job.model))?;
    let ls = LocalSampleSet::from_json_file(&resolve(base, &job.samples))?;
    let x0 = ls.x0.clone();
    let mut result = match job.method {
        Method::Kde => kde_recourse(&x0, &ls, &job.recourse)?,
        Method::Robust => robust_recourse(&x0, &ls, &job.recourse)?,
        Method::Wachter => wachter_recourse(&x0, &model, &job.recourse.frozen_mask, &job.wachter)?,
    };
    if job.method != Method::Wachter {
        result.validate_with(&model)?;
    }
    let report = serde_json::json!({
        "input": x0,
        "method": job.method,
        "x_prime": result.x_prime,
        "cost": result.cost,
        "converged": result.converged,
        "optimizer_converged": result.optimizer_converged,
        "status": result.status,
        "iterations": result.iterations,
        "trace_length": result.objective_trace.len(),
        "final_objective": result.objective_trace.last(),
        "proba": model.proba(&result.x_prime),
        "config": { "recourse": job.recourse, "wachter": job.wachter },
    });
    write_json(out, &report)?;
    Ok(report)
}

/// `benchmark`: classifier quality of the current model and the future ensemble.
pub fn run_benchmark(config: &Path, out: &Path) -> Result<serde_json::Value> {
    let cfg = ExperimentConfig::from_file(config)?;
    let prep = prepare(&cfg)?;
    let report = classifier_report(&prep)?;
    write_json(out, &report)?;
    Ok(report)
}

/// `sweep`: the full cost/validity sweep.
pub fn run_sweep_job(config: &Path, out_dir: &Path) -> Result<serde_json::Value> {
    let cfg = ExperimentConfig::from_file(config)?;
    let out = run_sweep(&cfg, out_dir)?;
    Ok(serde_json::json!({
        "rows": out.records.len(),
        "aggregate_rows": out.aggregates.len(),
        "out_dir": out_dir,
    }))
}
