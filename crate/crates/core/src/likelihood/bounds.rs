//! Aggregate optimistic / pessimistic mixture likelihoods.

use std::f64::consts::PI;

use super::cache::{AlphaCache, SubproblemKind};
use super::pgd::PgdParams;
use super::subproblem::{optimistic_alpha_with, pessimistic_alpha_with, AmbiguityBall, ComponentSolution};
use crate::linalg::{l2_dist, l2_dist_sq, log_sum_exp};
use crate::{par, Error, Result};

/// Inner-solver settings for the likelihood bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundSolver<'a> {
    pub params: PgdParams,
    pub zeta: f64,
    pub cache: Option<&'a AlphaCache>,
}

impl Default for BoundSolver<'_> {
    fn default() -> Self {
        Self {
            params: PgdParams::INNER,
            zeta: super::subproblem::DEFAULT_ZETA,
            cache: None,
        }
    }
}

/// A likelihood bound in log space with the per-component solutions behind it.
#[derive(Debug, Clone)]
pub struct LikelihoodBound {
    pub log_likelihood: f64,
    pub components: Vec<ComponentSolution>,
}

fn check_samples(x: &[f64], samples: &[Vec<f64>], ball: &AmbiguityBall) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("sample set must be non-empty"));
    }
    if x.len() != ball.dim {
        return Err(Error::DimensionMismatch {
            expected: ball.dim,
            got: x.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != ball.dim) {
        return Err(Error::DimensionMismatch {
            expected: ball.dim,
            got: bad.len(),
        });
    }
    Ok(())
}

fn log_normalizer(n: usize, p: usize) -> f64 {
    (n as f64).ln() + 0.5 * p as f64 * (2.0 * PI).ln()
}

fn solve_all(
    x: &[f64],
    samples: &[Vec<f64>],
    ball: &AmbiguityBall,
    solver: &BoundSolver<'_>,
    kind: SubproblemKind,
) -> Result<Vec<ComponentSolution>> {
    let solve = |dist: f64| match kind {
        SubproblemKind::Optimistic => optimistic_alpha_with(dist, ball, &solver.params),
        SubproblemKind::Pessimistic => pessimistic_alpha_with(dist, ball, solver.zeta, &solver.params),
    };
    par::map(samples, |s| {
        let dist = l2_dist(x, s);
        match solver.cache {
            Some(cache) => cache.get_or_try_insert(kind, dist, ball, solver.zeta, &solver.params, || solve(dist)),
            None => solve(dist),
        }
    })
    .into_iter()
    .collect()
}

/// Maximum mixture log-likelihood of `x` over the ambiguity ball around the
/// smoothed empirical distribution of `samples`.
pub fn optimistic_bound(
    x: &[f64],
    samples: &[Vec<f64>],
    ball: &AmbiguityBall,
    solver: &BoundSolver<'_>,
) -> Result<LikelihoodBound> {
    ball.validate()?;
    check_samples(x, samples, ball)?;
    let components = solve_all(x, samples, ball, solver, SubproblemKind::Optimistic)?;
    let exps: Vec<f64> = components.iter().map(|c| -c.alpha).collect();
    Ok(LikelihoodBound {
        log_likelihood: log_sum_exp(&exps) - log_normalizer(samples.len(), ball.dim),
        components,
    })
}

/// Minimum mixture log-likelihood of `x` over the ambiguity ball.
pub fn pessimistic_bound(
    x: &[f64],
    samples: &[Vec<f64>],
    ball: &AmbiguityBall,
    solver: &BoundSolver<'_>,
) -> Result<LikelihoodBound> {
    ball.validate()?;
    check_samples(x, samples, ball)?;
    let components = solve_all(x, samples, ball, solver, SubproblemKind::Pessimistic)?;
    let exps: Vec<f64> = components.iter().map(|c| c.alpha).collect();
    Ok(LikelihoodBound {
        log_likelihood: log_sum_exp(&exps) - log_normalizer(samples.len(), ball.dim),
        components,
    })
}

/// `sum_i exp(-alpha_i) / (N (2 pi)^{p/2})` with optimistic alphas.
pub fn optimistic_likelihood(x: &[f64], samples0: &[Vec<f64>], ball: &AmbiguityBall) -> Result<f64> {
    Ok(optimistic_bound(x, samples0, ball, &BoundSolver::default())?
        .log_likelihood
        .exp())
}

/// `sum_i exp(alpha_i) / (N (2 pi)^{p/2})` with pessimistic alphas.
pub fn pessimistic_likelihood(x: &[f64], samples1: &[Vec<f64>], ball: &AmbiguityBall, zeta: f64) -> Result<f64> {
    let solver = BoundSolver {
        zeta,
        ..BoundSolver::default()
    };
    Ok(pessimistic_bound(x, samples1, ball, &solver)?.log_likelihood.exp())
}

/// Log-likelihood of `x` under the nominal mixture `N^{-1} sum_i N(x_i, sigma^2 I)`.
pub fn nominal_log_likelihood(x: &[f64], samples: &[Vec<f64>], sigma: f64) -> f64 {
    let p = x.len();
    let exps: Vec<f64> = samples
        .iter()
        .map(|s| -l2_dist_sq(x, s) / (2.0 * sigma * sigma))
        .collect();
    log_sum_exp(&exps) - log_normalizer(samples.len(), p) - p as f64 * sigma.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<Vec<f64>> {
        vec![
            vec![0.1, 0.2],
            vec![-0.5, 0.4],
            vec![1.0, -0.3],
            vec![0.0, 0.0],
            vec![0.7, 0.9],
        ]
    }

    #[test]
    fn collapse_matches_nominal() {
        let x = [0.3, -0.2];
        let ball = AmbiguityBall::new(0.0, 0.7, 2).unwrap();
        let nominal = nominal_log_likelihood(&x, &samples(), 0.7);
        let opt = optimistic_bound(&x, &samples(), &ball, &BoundSolver::default()).unwrap();
        let pes = pessimistic_bound(&x, &samples(), &ball, &BoundSolver::default()).unwrap();
        assert!((opt.log_likelihood - nominal).abs() < 1e-12);
        assert!((pes.log_likelihood - nominal).abs() < 1e-12);
    }

    #[test]
    fn mode_density_for_coincident_sample() {
        let ball = AmbiguityBall::new(0.4, 0.5, 3).unwrap();
        let x = vec![0.2, 0.1, -0.4];
        let value = optimistic_likelihood(&x, std::slice::from_ref(&x), &ball).unwrap();
        let expected = 1.0 / ((2.0 * PI).powf(1.5) * 0.5f64.powi(3));
        assert!((value - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn sandwich() {
        let x = [0.3, -0.2];
        let nominal = nominal_log_likelihood(&x, &samples(), 0.7);
        for eps in [0.1, 0.5, 1.2] {
            let ball = AmbiguityBall::new(eps, 0.7, 2).unwrap();
            let opt = optimistic_bound(&x, &samples(), &ball, &BoundSolver::default()).unwrap();
            let pes = pessimistic_bound(&x, &samples(), &ball, &BoundSolver::default()).unwrap();
            assert!(pes.log_likelihood <= nominal + 1e-12);
            assert!(opt.log_likelihood >= nominal - 1e-12);
        }
    }

    #[test]
    fn empty_samples_rejected() {
        let ball = AmbiguityBall::new(0.1, 0.7, 2).unwrap();
        assert!(optimistic_likelihood(&[0.0, 0.0], &[], &ball).is_err());
        assert!(pessimistic_likelihood(&[0.0, 0.0], &[], &ball, 1e-8).is_err());
    }
}
