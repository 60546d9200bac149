use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_recourse::classifier::{load_model, save_model, train_mlp, MlpModel};
use robust_recourse::data::generate_synthetic;
use robust_recourse::harness::{
    aggregate, derive_seed, evaluate_recourse, load_datasets, pareto_flags, prepare, retrain_future_models,
    sample_instances, ExperimentConfig, Prepared, SweepOutput, TrainSection,
};
use robust_recourse::recourse::{robust_recourse, Method};
use robust_recourse::Error;

const SMALL: &str = r#"
version = 1
master_seed = 5
instances = 3

[dataset]
kind = "synthetic"
n = 300

[train]
epochs = 60

[future]
models = 3
fraction = 0.2

[[methods]]
method = "kde"
delta_plus = [0.0, 0.5]

[[methods]]
method = "robust"
eps0 = [0.5]
eps1 = [0.0, 0.5]
delta_plus = [0.5]

[[methods]]
method = "wachter"
"#;

fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL).unwrap()
}

fn small_sweep() -> &'static SweepOutput {
    static S: OnceLock<SweepOutput> = OnceLock::new();
    S.get_or_init(|| robust_recourse::harness::pareto_sweep(&small_config()).unwrap())
}

fn short_training() -> TrainSection {
    TrainSection {
        epochs: 30,
        ..TrainSection::default()
    }
}

#[test]
fn full_fraction_single_model_uses_all_shifted_data() {
    let d1 = generate_synthetic(120, 0.0, 1).unwrap();
    let d2 = generate_synthetic(60, 1.0, 2).unwrap();
    let t = short_training();
    let models = retrain_future_models(&d1, &d2, 1, 1.0, &t, 7).unwrap();
    assert_eq!(models.len(), 1);
    let direct = train_mlp(&d1.concat(&d2).unwrap(), &t.with_seed(derive_seed(7, "fit", 0))).unwrap();
    assert_eq!(models[0], direct);
}

#[test]
fn future_ensembles_are_deterministic_and_distinct() {
    let d1 = generate_synthetic(120, 0.0, 3).unwrap();
    let d2 = generate_synthetic(60, 1.0, 4).unwrap();
    let t = short_training();
    let a = retrain_future_models(&d1, &d2, 4, 0.2, &t, 11).unwrap();
    let b = retrain_future_models(&d1, &d2, 4, 0.2, &t, 11).unwrap();
    assert_eq!(a, b);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            assert_ne!(a[i].params(), a[j].params());
        }
    }
    assert!(retrain_future_models(&d1, &d2, 2, 0.0, &t, 11).is_err());
}

#[test]
fn evaluation_counts_future_votes() {
    let d = generate_synthetic(200, 0.0, 5).unwrap();
    let model = train_mlp(&d, &short_training().with_seed(6)).unwrap();
    let deep = d
        .features
        .iter()
        .max_by(|a, b| model.proba(a).total_cmp(&model.proba(b)))
        .unwrap();
    let copies = vec![model.clone(); 10];
    assert_eq!(evaluate_recourse(deep, &model, &copies).unwrap(), (1, 1.0));

    let flipped = {
        let mut layers = model.layers().to_vec();
        let last = layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = -*w);
        last.bias.iter_mut().for_each(|b| *b = -*b);
        MlpModel::from_layers(layers).unwrap()
    };
    let (_, fv) = evaluate_recourse(deep, &model, &[model.clone(), flipped]).unwrap();
    assert_eq!(fv, 0.5);
    assert!(matches!(
        evaluate_recourse(&[0.0, 0.0, 0.0], &model, &copies),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn aggregates_are_recomputed_means() {
    let out = small_sweep();
    assert_eq!(out.records.len(), 3 * (2 + 2 + 1));
    for row in &out.aggregates {
        let group: Vec<_> = out
            .records
            .iter()
            .filter(|r| r.method == row.method && r.eps0 == row.eps0 && r.eps1 == row.eps1)
            .filter(|r| r.delta_plus == row.delta_plus && !r.failed())
            .collect();
        assert_eq!(group.len(), row.n);
        let mean = |f: &dyn Fn(&&robust_recourse::harness::EvaluationRecord) -> f64| {
            group.iter().map(f).sum::<f64>() / group.len() as f64
        };
        assert!((mean(&|r| r.cost.unwrap()) - row.mean_cost).abs() <= 1e-12);
        assert!((mean(&|r| r.future_validity.unwrap()) - row.mean_future_validity).abs() <= 1e-12);
        assert!((mean(&|r| f64::from(r.current_valid.unwrap())) - row.mean_current_validity).abs() <= 1e-12);
    }
}

#[test]
fn records_are_sorted_and_consistent() {
    let out = small_sweep();
    let mut sorted = out.records.clone();
    robust_recourse::harness::sort_records(&mut sorted);
    assert_eq!(sorted, out.records);
    for r in out.records.iter().filter(|r| !r.failed()) {
        let fv = r.future_validity.unwrap();
        assert!((fv * 3.0 - (fv * 3.0).round()).abs() <= 1e-12);
        if r.method != Method::Wachter {
            assert_eq!(r.converged, r.current_valid.map(|c| c == 1));
        }
    }
}

#[test]
fn single_point_single_instance_aggregate_equals_row() {
    let text = SMALL
        .replace("instances = 3", "instances = 1")
        .replace("delta_plus = [0.0, 0.5]", "delta_plus = [0.3]");
    let mut cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    cfg.methods.truncate(1);
    let out = robust_recourse::harness::pareto_sweep(&cfg).unwrap();
    assert_eq!(out.records.len(), 1);
    let (r, a) = (&out.records[0], &out.aggregates[0]);
    assert_eq!(a.n, 1);
    assert_eq!(Some(a.mean_cost), r.cost);
    assert_eq!(Some(a.mean_future_validity), r.future_validity);
    assert!(a.pareto);
}

#[test]
fn pareto_flags_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|_| (f64::from(rng.random_range(0..5u8)), f64::from(rng.random_range(0..5u8))))
            .collect();
        let flags = pareto_flags(&pts);
        for (i, &(c, v)) in pts.iter().enumerate() {
            let dominated = pts
                .iter()
                .enumerate()
                .any(|(j, &(c2, v2))| j != i && c2 <= c && v2 >= v && (c2, v2) != (c, v));
            assert_eq!(flags[i], !dominated);
        }
    }
    let rows = aggregate(&small_sweep().records);
    assert!(rows.iter().any(|r| r.pareto));
}

#[test]
fn valid_recourses_survive_a_model_round_trip() {
    let cfg = small_config();
    let prep: Prepared = prepare(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&prep.model, &path).unwrap();
    let reloaded = load_model(&path).unwrap();
    let spec = &cfg.methods[1];
    let point = spec.grid()[1];
    for ((_, x0), ls) in prep.instances.iter().zip(sample_instances(&cfg, &prep)) {
        let res = robust_recourse(x0, &ls.unwrap(), &spec.recourse_config(&point, Vec::new())).unwrap();
        let (current, _) = evaluate_recourse(&res.x_prime, &prep.model, &prep.future_models).unwrap();
        if current == 1 {
            assert_eq!(reloaded.label(&res.x_prime), 1);
        }
    }
}

#[test]
fn csv_datasets_are_scaled_with_the_training_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (name, shift) in [("current.csv", 0.0), ("future.csv", 5.0)] {
        let mut text = String::from("duration,amount,personal_status_sex,age,label\n");
        for i in 0..120 {
            let duration = rng.random_range(4.0..60.0) + shift;
            let amount = rng.random_range(500.0..9000.0);
            let status = ["A91", "A92", "A93"][i % 3];
            let age = rng.random_range(19..70);
            let label = u8::from(duration < 30.0) + 1;
            text.push_str(&format!("{duration},{amount},{status},{age},{label}\n"));
        }
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let cfg_path = dir.path().join("german.toml");
    std::fs::write(
        &cfg_path,
        r#"
version = 1
master_seed = 1
[dataset]
kind = "csv"
schema = "german"
current = "current.csv"
future = "future.csv"
[[methods]]
method = "kde"
"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    let (train, test, future) = load_datasets(&cfg).unwrap();
    assert_eq!(train.len() + test.len(), 120);
    assert_eq!(train.scaler, future.scaler);
    assert_eq!(train.frozen_mask(), vec![false, false, true, false]);
    let d = train.features.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
    assert!(d <= 1.0);
    assert!(future.features.iter().any(|x| x[0] > 1.0));
}
