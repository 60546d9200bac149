use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_recourse::classifier::{
    auc, load_model, save_model, train_mlp, train_mlp_traced, MlpModel, TrainConfig, HIDDEN_WIDTHS,
};
use robust_recourse::data::{generate_synthetic, split, split_indices, Dataset, SplitSpec};
use robust_recourse::Error;

fn small_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let d = generate_synthetic(300, 0.0, 1).unwrap();
    let model = train_mlp(&d, &small_train_config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(
        back.widths(),
        vec![2, HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1], HIDDEN_WIDTHS[2], 1]
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = [rng.random_range(-2.0..4.0), rng.random_range(-2.0..7.0)];
        assert_eq!(
            model.predict_proba(&x).unwrap().to_bits(),
            back.predict_proba(&x).unwrap().to_bits()
        );
    }
}

#[test]
fn training_is_seed_deterministic() {
    let d = generate_synthetic(200, 0.0, 4).unwrap();
    let a = train_mlp(&d, &small_train_config(9)).unwrap();
    let b = train_mlp(&d, &small_train_config(9)).unwrap();
    let c = train_mlp(&d, &small_train_config(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn training_loss_never_increases() {
    let d = generate_synthetic(300, 0.5, 5).unwrap();
    let out = train_mlp_traced(
        &d,
        &TrainConfig {
            learning_rate: 0.05,
            ..small_train_config(6)
        },
    )
    .unwrap();
    for w in out.loss_trace.windows(2) {
        assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn wrong_input_dimension_is_rejected() {
    let model = MlpModel::default_architecture(3, 0).unwrap();
    assert!(matches!(
        model.predict_proba(&[0.0, 1.0]),
        Err(Error::DimensionMismatch { expected: 3, got: 2 })
    ));
}

#[test]
fn dataset_json_round_trip() {
    let d = generate_synthetic(50, 0.0, 8).unwrap();
    let (train, _) = split(&d, &SplitSpec::new(0.8, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    train.to_json_file(&path).unwrap();
    assert_eq!(Dataset::from_json_file(&path).unwrap(), train);
}

#[test]
fn scaled_split_round_trips_training_rows() {
    let d = generate_synthetic(100, 0.0, 11).unwrap();
    let spec = SplitSpec::new(0.8, 12);
    let (train, test) = split(&d, &spec).unwrap();
    let (rows, _) = split_indices(d.len(), &spec).unwrap();
    let scaler = train.scaler.clone().unwrap();
    assert_eq!(test.scaler.as_ref(), Some(&scaler));
    for (k, &i) in rows.iter().enumerate() {
        let raw = &d.features[i];
        assert_eq!(scaler.scale(raw), train.features[k]);
        assert!(train.features[k].iter().all(|v| (0.0..=1.0).contains(v)));
        for (a, b) in raw.iter().zip(scaler.unscale(&scaler.scale(raw))) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                total += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let n_train = (frac * n as f64).round() as usize;
        prop_assume!(n_train >= 1 && n_train < n);
        let (train, test) = split_indices(n, &SplitSpec::new(frac, seed)).unwrap();
        prop_assert_eq!(train.len(), n_train);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, &SplitSpec::new(frac, seed)).unwrap(), (train, test));
    }

    #[test]
    fn auc_matches_pair_counting(
        rows in prop::collection::vec((0u8..4, any::<bool>()), 2..20)
    ) {
        let scores: Vec<f64> = rows.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
        let labels: Vec<u8> = rows.iter().map(|(_, y)| u8::from(*y)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let got = auc(&scores, &labels).unwrap();
        prop_assert!((got - brute_force_auc(&scores, &labels)).abs() <= 1e-12);
    }
}
