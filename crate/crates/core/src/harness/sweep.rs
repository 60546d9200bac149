//! Data preparation, future-model ensembles, evaluation and the Pareto sweep.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, DatasetConfig, ExperimentConfig, GridPoint, TrainSection};
use crate::classifier::{auc, train_mlp, MlpModel};
use crate::data::{generate_synthetic, load_csv, split, Dataset, SplitSpec};
use crate::recourse::{kde_recourse, robust_recourse, wachter_recourse, Method, RecourseResult};
use crate::sampler::{build_local_sample_set, LocalSampleSet};
use crate::{par, Error, Result};

/// Everything the sweep needs before generating recourses.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    /// Shifted data in the units of `train`.
    pub future_data: Dataset,
    pub model: MlpModel,
    pub future_models: Vec<MlpModel>,
    /// `(test row index, input)` for inputs the current model rejects.
    pub instances: Vec<(usize, Vec<f64>)>,
}

/// Loads or generates the two datasets and splits the current one.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let seed = cfg.master_seed;
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            n,
            future_noise_std,
            train_fraction,
        } => {
            let d1 = generate_synthetic(*n, 0.0, derive_seed(seed, "d1", 0))?;
            let d2 = generate_synthetic(*n, *future_noise_std, derive_seed(seed, "d2", 0))?;
            let (train, test) = split(
                &d1,
                &SplitSpec::unscaled(*train_fraction, derive_seed(seed, "split", 0)),
            )?;
            Ok((train, test, d2))
        }
        DatasetConfig::Csv {
            schema,
            current,
            future,
            train_fraction,
        } => {
            let d1 = load_csv(current, *schema)?;
            let d2 = load_csv(future, *schema)?;
            let (train, test) = split(&d1, &SplitSpec::new(*train_fraction, derive_seed(seed, "split", 0)))?;
            let scaler = train.scaler.clone().expect("scaled split");
            let d2 = d2.with_scaler(&scaler)?;
            Ok((train, test, d2))
        }
    }
}

/// Trains `m` future classifiers, each on `d1_train` plus a fresh subsample
/// of `round(fraction * |d2|)` rows of `d2` (at least one).
pub fn retrain_future_models(
    d1_train: &Dataset,
    d2: &Dataset,
    m: usize,
    fraction: f64,
    train: &TrainSection,
    seed: u64,
) -> Result<Vec<MlpModel>> {
    if d2.is_empty() {
        return Err(Error::invalid("shifted dataset is empty"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0,1], got {fraction}")));
    }
    let size = ((fraction * d2.len() as f64).round() as usize).clamp(1, d2.len());
    par::map_range(m, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "subsample", k as u64));
        let mut rows = rand::seq::index::sample(&mut rng, d2.len(), size).into_vec();
        rows.sort_unstable();
        let data = d1_train.concat(&d2.subset(&rows))?;
        train_mlp(&data, &train.with_seed(derive_seed(seed, "fit", k as u64)))
    })
    .into_iter()
    .collect()
}

/// Data, current model, future ensemble and the rejected test inputs.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (train, test, future_data) = load_datasets(cfg)?;
    let model = train_mlp(&train, &cfg.train.with_seed(derive_seed(cfg.master_seed, "train", 0)))?;
    let future_models = retrain_future_models(
        &train,
        &future_data,
        cfg.future.models,
        cfg.future.fraction,
        &cfg.train,
        derive_seed(cfg.master_seed, "future", 0),
    )?;
    let instances: Vec<(usize, Vec<f64>)> = test
        .features
        .iter()
        .enumerate()
        .filter(|(_, x)| model.label(x) == 0)
        .take(cfg.instances)
        .map(|(i, x)| (i, x.clone()))
        .collect();
    if instances.is_empty() {
        return Err(Error::DegenerateData(
            "no test input is rejected by the current model".into(),
        ));
    }
    Ok(Prepared {
        train,
        test,
        future_data,
        model,
        future_models,
        instances,
    })
}

/// `(current_valid, future_validity)` of a recourse.
pub fn evaluate_recourse(x_prime: &[f64], current: &MlpModel, future: &[MlpModel]) -> Result<(u8, f64)> {
    if future.is_empty() {
        return Err(Error::invalid("future ensemble is empty"));
    }
    let current_valid = current.predict_label(x_prime)?;
    let mut hits = 0usize;
    for m in future {
        hits += usize::from(m.predict_label(x_prime)?);
    }
    Ok((current_valid, hits as f64 / future.len() as f64))
}

/// One row of the instance-level output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub instance_id: usize,
    pub method: Method,
    pub eps0: f64,
    pub eps1: f64,
    pub delta_plus: f64,
    pub cost: Option<f64>,
    pub current_valid: Option<u8>,
    pub future_validity: Option<f64>,
    pub converged: Option<bool>,
    pub failure_reason: Option<String>,
}

pub const RECORD_COLUMNS: [&str; 10] = [
    "instance_id",
    "method",
    "eps0",
    "eps1",
    "delta_plus",
    "cost",
    "current_valid",
    "future_validity",
    "converged",
    "failure_reason",
];

impl EvaluationRecord {
    fn new(instance_id: usize, method: Method, point: &GridPoint) -> Self {
        Self {
            instance_id,
            method,
            eps0: point.eps0,
            eps1: point.eps1,
            delta_plus: point.delta_plus,
            cost: None,
            current_valid: None,
            future_validity: None,
            converged: None,
            failure_reason: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.failure_reason.is_some()
    }

    fn key(&self) -> (Method, [f64; 3]) {
        (self.method, [self.eps0, self.eps1, self.delta_plus])
    }
}

/// Per-configuration means over the successful instance rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub eps0: f64,
    pub eps1: f64,
    pub delta_plus: f64,
    pub n: usize,
    pub failures: usize,
    pub mean_cost: f64,
    pub se_cost: f64,
    pub mean_current_validity: f64,
    pub mean_future_validity: f64,
    pub se_future_validity: f64,
    pub pareto: bool,
}

pub const AGGREGATE_COLUMNS: [&str; 12] = [
    "method",
    "eps0",
    "eps1",
    "delta_plus",
    "n",
    "failures",
    "mean_cost",
    "se_cost",
    "mean_current_validity",
    "mean_future_validity",
    "se_future_validity",
    "pareto",
];

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn cmp_key(a: &(Method, [f64; 3]), b: &(Method, [f64; 3])) -> std::cmp::Ordering {
    a.0.cmp(&b.0)
        .then(a.1[0].total_cmp(&b.1[0]))
        .then(a.1[1].total_cmp(&b.1[1]))
        .then(a.1[2].total_cmp(&b.1[2]))
}

/// Sorts rows by method, configuration point and instance.
pub fn sort_records(records: &mut [EvaluationRecord]) {
    records.sort_by(|a, b| cmp_key(&a.key(), &b.key()).then(a.instance_id.cmp(&b.instance_id)));
}

/// Non-dominated flags in (lower cost, higher validity). Points with a NaN
/// coordinate are never flagged and never dominate.
pub fn pareto_flags(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(c, v)| {
            if c.is_nan() || v.is_nan() {
                return false;
            }
            !points.iter().any(|&(c2, v2)| c2 <= c && v2 >= v && (c2 < c || v2 > v))
        })
        .collect()
}

/// Groups sorted records by configuration point and computes means, standard
/// errors and per-method Pareto flags.
pub fn aggregate(records: &[EvaluationRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut keys: Vec<(Method, [f64; 3])> = records.iter().map(EvaluationRecord::key).collect();
    keys.sort_by(cmp_key);
    keys.dedup_by(|a, b| cmp_key(a, b).is_eq());
    for key in keys {
        let group: Vec<&EvaluationRecord> = records.iter().filter(|r| cmp_key(&r.key(), &key).is_eq()).collect();
        let ok: Vec<&&EvaluationRecord> = group.iter().filter(|r| !r.failed()).collect();
        let costs: Vec<f64> = ok.iter().filter_map(|r| r.cost).collect();
        let current: Vec<f64> = ok.iter().filter_map(|r| r.current_valid.map(f64::from)).collect();
        let future: Vec<f64> = ok.iter().filter_map(|r| r.future_validity).collect();
        let (mean_cost, se_cost) = mean_se(&costs);
        let (mean_future_validity, se_future_validity) = mean_se(&future);
        rows.push(AggregateRow {
            method: key.0,
            eps0: key.1[0],
            eps1: key.1[1],
            delta_plus: key.1[2],
            n: ok.len(),
            failures: group.len() - ok.len(),
            mean_cost,
            se_cost,
            mean_current_validity: mean_se(&current).0,
            mean_future_validity,
            se_future_validity,
            pareto: false,
        });
    }
    let mut by_method: BTreeMap<Method, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_method.entry(r.method).or_default().push(i);
    }
    for idx in by_method.values() {
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .map(|&i| (rows[i].mean_cost, rows[i].mean_future_validity))
            .collect();
        for (&i, flag) in idx.iter().zip(pareto_flags(&pts)) {
            rows[i].pareto = flag;
        }
    }
    rows
}

fn run_one(
    method: Method,
    spec: &super::config::MethodSpec,
    point: &GridPoint,
    x0: &[f64],
    ls: std::result::Result<&LocalSampleSet, &str>,
    prep: &Prepared,
) -> Result<RecourseResult> {
    let frozen = prep.train.frozen_mask();
    let mut result = match method {
        Method::Wachter => wachter_recourse(x0, &prep.model, &frozen, &spec.wachter_params(point))?,
        Method::Kde | Method::Robust => {
            let ls = ls.map_err(|msg| Error::DegenerateNeighborhood(msg.to_string()))?;
            let cfg = spec.recourse_config(point, frozen);
            if method == Method::Kde {
                kde_recourse(x0, ls, &cfg)?
            } else {
                robust_recourse(x0, ls, &cfg)?
            }
        }
    };
    if method != Method::Wachter {
        result.validate_with(&prep.model)?;
    }
    Ok(result)
}

/// Local sample sets for every instance, seeded per instance id.
pub fn sample_instances(cfg: &ExperimentConfig, prep: &Prepared) -> Vec<Result<LocalSampleSet>> {
    par::map(&prep.instances, |(id, x0)| {
        build_local_sample_set(
            x0,
            &prep.train,
            &prep.model,
            &cfg.sampler,
            derive_seed(cfg.master_seed, "sample", *id as u64),
        )
    })
}

/// Evaluates every (method, grid point, instance) combination. Rows are
/// returned sorted; failures carry their reason.
pub fn pareto_sweep_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Vec<EvaluationRecord> {
    let samples = sample_instances(cfg, prep);
    let sample_errors: Vec<Option<String>> = samples
        .iter()
        .map(|s| s.as_ref().err().map(|e| e.to_string()))
        .collect();
    let mut tasks = Vec::new();
    for spec in &cfg.methods {
        for point in spec.grid() {
            for k in 0..prep.instances.len() {
                tasks.push((spec, point, k));
            }
        }
    }
    let mut records = par::map(&tasks, |(spec, point, k)| {
        let (id, x0) = &prep.instances[*k];
        let mut rec = EvaluationRecord::new(*id, spec.method, point);
        let ls = match (&samples[*k], &sample_errors[*k]) {
            (Ok(ls), _) => Ok(ls),
            (Err(_), Some(msg)) => Err(msg.as_str()),
            (Err(_), None) => unreachable!(),
        };
        let outcome = run_one(spec.method, spec, point, x0, ls, prep)
            .and_then(|r| evaluate_recourse(&r.x_prime, &prep.model, &prep.future_models).map(|e| (r, e)));
        match outcome {
            Ok((r, (current_valid, future_validity))) => {
                rec.cost = Some(r.cost);
                rec.current_valid = Some(current_valid);
                rec.future_validity = Some(future_validity);
                rec.converged = Some(r.converged);
            }
            Err(e) => rec.failure_reason = Some(format!("{}: {e}", e.kind())),
        }
        rec
    });
    sort_records(&mut records);
    records
}

pub struct SweepOutput {
    pub records: Vec<EvaluationRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub manifest: serde_json::Value,
}

pub fn pareto_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let prep = prepare(cfg)?;
    let records = pareto_sweep_prepared(cfg, &prep);
    let aggregates = aggregate(&records);
    let manifest = manifest(cfg, &prep, &records);
    Ok(SweepOutput {
        records,
        aggregates,
        manifest,
    })
}

fn manifest(cfg: &ExperimentConfig, prep: &Prepared, records: &[EvaluationRecord]) -> serde_json::Value {
    let s = cfg.master_seed;
    serde_json::json!({
        "library": env!("CARGO_PKG_NAME"),
        "library_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed_scheme": "splitmix64(splitmix64(master ^ fnv1a(tag)) ^ index)",
        "seeds": {
            "master": s,
            "split": derive_seed(s, "split", 0),
            "train": derive_seed(s, "train", 0),
            "future": derive_seed(s, "future", 0),
        },
        "n_train": prep.train.len(),
        "n_test": prep.test.len(),
        "n_future_data": prep.future_data.len(),
        "instances": prep.instances.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
        "rows": records.len(),
        "failed_rows": records.iter().filter(|r| r.failed()).count(),
    })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_records_csv<W: std::io::Write>(records: &[EvaluationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.instance_id.to_string(),
            r.method.as_str().to_string(),
            fmt_f(r.eps0),
            fmt_f(r.eps1),
            fmt_f(r.delta_plus),
            r.cost.map(fmt_f).unwrap_or_default(),
            fmt_opt(&r.current_valid),
            r.future_validity.map(fmt_f).unwrap_or_default(),
            r.converged.map(|c| u8::from(c).to_string()).unwrap_or_default(),
            r.failure_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_aggregate_csv<W: std::io::Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            fmt_f(r.eps0),
            fmt_f(r.eps1),
            fmt_f(r.delta_plus),
            r.n.to_string(),
            r.failures.to_string(),
            fmt_f(r.mean_cost),
            fmt_f(r.se_cost),
            fmt_f(r.mean_current_validity),
            fmt_f(r.mean_future_validity),
            fmt_f(r.se_future_validity),
            u8::from(r.pareto).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Runs the sweep and writes `records.csv`, `aggregate.csv` and
/// `manifest.json` into `out_dir`.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out = pareto_sweep(cfg)?;
    write_records_csv(&out.records, create(&out_dir.join("records.csv"))?)?;
    write_aggregate_csv(&out.aggregates, create(&out_dir.join("aggregate.csv"))?)?;
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&out.manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}

/// Accuracy and AUC of the current model on the test split and of each
/// future model on the shifted data.
pub fn classifier_report(prep: &Prepared) -> Result<serde_json::Value> {
    let test_auc = auc(&prep.model.scores(&prep.test), &prep.test.labels)?;
    let future: Vec<serde_json::Value> = prep
        .future_models
        .iter()
        .map(|m| {
            let a = auc(&m.scores(&prep.future_data), &prep.future_data.labels).ok();
            serde_json::json!({ "accuracy": m.accuracy(&prep.future_data), "auc": a })
        })
        .collect();
    Ok(serde_json::json!({
        "current": { "accuracy": prep.model.accuracy(&prep.test), "auc": test_auc },
        "future": future,
    }))
}
