use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_recourse::classifier::{train_mlp, MlpModel, TrainConfig};
use robust_recourse::data::{generate_synthetic, Dataset};
use robust_recourse::recourse::{
    kde_log_gradient, kde_log_objective, kde_objective, kde_recourse, project_l1_ball, robust_gradient,
    robust_log_objective, robust_recourse, wachter_recourse, ConstraintMode, GradientMode, RecourseConfig,
    WachterParams,
};
use robust_recourse::sampler::{build_local_sample_set, LocalSampleSet, SamplerConfig};
use robust_recourse::Error;

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn random_fixture(seed: u64, p: usize, n0: usize, n1: usize) -> LocalSampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = |shift: f64| -> Vec<f64> { (0..p).map(|_| shift + rng.random_range(-1.0..1.0)).collect() };
    let s0 = (0..n0).map(|_| pt(-0.5)).collect();
    let s1 = (0..n1).map(|_| pt(0.5)).collect();
    let x0 = vec![-1.0; p];
    let x_b = vec![0.0; p];
    LocalSampleSet::from_parts(x0, x_b, s0, s1, 0.2, seed).unwrap()
}

fn synthetic() -> &'static (Dataset, MlpModel) {
    static F: OnceLock<(Dataset, MlpModel)> = OnceLock::new();
    F.get_or_init(|| {
        let d = generate_synthetic(500, 0.0, 41).unwrap();
        let m = train_mlp(
            &d,
            &TrainConfig {
                seed: 42,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        (d, m)
    })
}

fn synthetic_instance(k: usize) -> (Vec<f64>, LocalSampleSet) {
    let (d, model) = synthetic();
    let x0 = d
        .features
        .iter()
        .filter(|x| model.label(x) == 0)
        .nth(k)
        .unwrap()
        .clone();
    let ls = build_local_sample_set(&x0, d, model, &SamplerConfig::default(), 43 + k as u64).unwrap();
    (x0, ls)
}

#[test]
fn kde_matches_naive_sum() {
    let ls = random_fixture(1, 2, 10, 10);
    let h = 0.7;
    let k =
        |x: &[f64], s: &[f64]| (-(x[0] - s[0]).powi(2) / (2.0 * h * h) - (x[1] - s[1]).powi(2) / (2.0 * h * h)).exp();
    for x in [[0.1, -0.2], [1.0, 1.0], [-0.7, 0.3]] {
        let num: f64 = ls.samples0.iter().map(|s| k(&x, s)).sum();
        let den: f64 = ls.samples1.iter().map(|s| k(&x, s)).sum();
        let got = kde_objective(&x, &ls, h).unwrap();
        assert!((got - num / den).abs() <= 1e-12 * (num / den));
    }
}

#[test]
fn kde_recourse_beats_random_feasible_points() {
    // Two separated clusters, so the log ratio has a single basin.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut around = |c: [f64; 2]| -> Vec<f64> { c.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect() };
    let s0: Vec<Vec<f64>> = (0..10).map(|_| around([-1.0, -1.0])).collect();
    let s1: Vec<Vec<f64>> = (0..10).map(|_| around([1.0, 0.5])).collect();
    let ls = LocalSampleSet::from_parts(vec![-1.0, -1.0], vec![0.0, -0.2], s0, s1, 0.2, 0).unwrap();
    let cfg = RecourseConfig {
        delta_plus: 0.5,
        sigma: 0.5,
        ..RecourseConfig::default()
    };
    let res = kde_recourse(&ls.x0, &ls, &cfg).unwrap();
    let best = kde_log_objective(&res.x_prime, &ls, cfg.sigma).unwrap();
    let delta = l1(&ls.x0, &ls.x_b) + cfg.delta_plus;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let y: Vec<f64> = ls.x0.iter().map(|c| c + rng.random_range(-delta..delta)).collect();
        let y = project_l1_ball(&y, &ls.x0, delta, &[]);
        let v = kde_log_objective(&y, &ls, cfg.sigma).unwrap();
        assert!(best <= v + 1e-9, "{best} > {v} at {y:?}");
    }
}

#[test]
fn robust_recourse_without_ambiguity_is_kde_recourse() {
    for seed in 0..10 {
        let ls = random_fixture(100 + seed, 2 + seed as usize % 3, 15, 15);
        let cfg = RecourseConfig {
            delta_plus: 0.4,
            sigma: 0.6,
            ..RecourseConfig::default()
        };
        let a = robust_recourse(&ls.x0, &ls, &cfg).unwrap();
        let b = kde_recourse(&ls.x0, &ls, &cfg).unwrap();
        for (u, v) in a.x_prime.iter().zip(&b.x_prime) {
            assert!((u - v).abs() <= cfg.outer.tol, "{:?} vs {:?}", a.x_prime, b.x_prime);
        }
    }
}

#[test]
fn envelope_gradient_without_ambiguity_is_kde_gradient() {
    let ls = random_fixture(5, 3, 12, 9);
    let cfg = RecourseConfig {
        sigma: 0.8,
        ..RecourseConfig::default()
    };
    for x in [[0.0, 0.1, 0.2], [-0.5, 0.4, 1.0]] {
        let g = robust_gradient(&x, &ls, &cfg).unwrap();
        let k = kde_log_gradient(&x, &ls, cfg.sigma).unwrap();
        for (a, b) in g.iter().zip(&k) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn objective_grows_with_either_radius() {
    let ls = random_fixture(6, 2, 10, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let value = |eps0: f64, eps1: f64| {
            robust_log_objective(
                &x,
                &ls,
                &RecourseConfig {
                    eps0,
                    eps1,
                    ..RecourseConfig::default()
                },
            )
            .unwrap()
        };
        for k in 0..6 {
            let (e, next) = (0.3 * k as f64, 0.3 * (k + 1) as f64);
            assert!(value(next, 0.4) >= value(e, 0.4) - 1e-9);
            assert!(value(0.4, next) >= value(0.4, e) - 1e-9);
        }
    }
}

#[test]
fn robust_recourse_moves_into_the_favorable_region() {
    let (_, model) = synthetic();
    for k in 0..3 {
        let (x0, ls) = synthetic_instance(k);
        let cfg = RecourseConfig {
            eps0: 0.5,
            eps1: 0.5,
            delta_plus: 0.6,
            ..RecourseConfig::default()
        };
        let mut res = robust_recourse(&x0, &ls, &cfg).unwrap();
        assert!(model.proba(&res.x_prime) > model.proba(&ls.x_b));
        assert!(res.validate_with(model).unwrap());
        assert!(res.cost <= l1(&x0, &ls.x_b) + cfg.delta_plus + 1e-9);
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn frozen_coordinate_is_untouched() {
    let (x0, ls) = synthetic_instance(0);
    let cfg = RecourseConfig {
        eps0: 0.5,
        eps1: 0.5,
        delta_plus: 0.6,
        frozen_mask: vec![true, false],
        ..RecourseConfig::default()
    };
    let res = robust_recourse(&x0, &ls, &cfg).unwrap();
    assert_eq!(res.x_prime[0].to_bits(), x0[0].to_bits());
    let res = kde_recourse(&x0, &ls, &cfg).unwrap();
    assert_eq!(res.x_prime[0].to_bits(), x0[0].to_bits());
}

#[test]
fn boundary_constraint_mode_stays_near_the_boundary() {
    let (x0, ls) = synthetic_instance(1);
    let cfg = RecourseConfig {
        eps0: 0.5,
        eps1: 0.5,
        constraint: ConstraintMode::AroundBoundary { delta_prime: 0.3 },
        ..RecourseConfig::default()
    };
    let res = robust_recourse(&x0, &ls, &cfg).unwrap();
    assert!(l1(&res.x_prime, &ls.x_b) <= 0.3 + 1e-9);
}

#[test]
fn finite_difference_mode_reaches_a_similar_objective() {
    let ls = random_fixture(8, 2, 12, 12);
    let base = RecourseConfig {
        eps0: 0.3,
        eps1: 0.3,
        delta_plus: 0.5,
        sigma: 0.6,
        ..RecourseConfig::default()
    };
    let fd = RecourseConfig {
        gradient: GradientMode::FiniteDifference { step: 1e-5 },
        ..base.clone()
    };
    let a = robust_recourse(&ls.x0, &ls, &base).unwrap();
    let b = robust_recourse(&ls.x0, &ls, &fd).unwrap();
    let fa = robust_log_objective(&a.x_prime, &ls, &base).unwrap();
    let fb = robust_log_objective(&b.x_prime, &ls, &base).unwrap();
    assert!((fa - fb).abs() <= 1e-3, "{fa} vs {fb}");
}

#[test]
fn wachter_contract() {
    let (d, model) = synthetic();
    let favorable = d.features.iter().find(|x| model.label(x) == 1).unwrap();
    assert!(matches!(
        wachter_recourse(favorable, model, &[], &WachterParams::default()),
        Err(Error::AlreadyFavorable)
    ));
    for k in 0..3 {
        let (x0, _) = synthetic_instance(k);
        let res = wachter_recourse(&x0, model, &[false, true], &WachterParams::default()).unwrap();
        assert_eq!(res.x_prime[1].to_bits(), x0[1].to_bits());
        if res.converged {
            assert_eq!(model.label(&res.x_prime), 1);
        }
        assert!((res.cost - l1(&res.x_prime, &x0)).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn l1_projection_is_feasible_and_idempotent(
        x in prop::collection::vec(-5.0f64..5.0, 1..6),
        delta in 0.0f64..4.0,
        mask_bits in any::<u8>(),
    ) {
        let p = x.len();
        let center: Vec<f64> = (0..p).map(|j| 0.3 * j as f64 - 0.5).collect();
        let mask: Vec<bool> = (0..p).map(|j| mask_bits >> j & 1 == 1).collect();
        let y = project_l1_ball(&x, &center, delta, &mask);
        prop_assert!(l1(&y, &center) <= delta + 1e-9);
        for j in 0..p {
            if mask[j] {
                prop_assert_eq!(y[j], center[j]);
            }
        }
        let z = project_l1_ball(&y, &center, delta, &mask);
        for (a, b) in y.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
