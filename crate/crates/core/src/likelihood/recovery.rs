//! Reconstruction of the worst-case Gaussian components from the 2-D
//! subproblem solutions, plus the Gaussian/ground-cost helpers they need.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::subproblem::{AmbiguityBall, ComponentSolution};
use crate::linalg::{axpy_into, dot, l2_dist, l2_norm};
use crate::{Error, Result};

/// Which column of the basis carries the designated direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisPosition {
    First,
    Last,
}

/// A Gaussian `N(mean, V diag(eig_roots^2) V^T)` kept in eigen form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseComponent {
    pub mean: Vec<f64>,
    pub eig_roots: Vec<f64>,
    /// Orthonormal `p x p` matrix, stored by rows; column `j` pairs with
    /// `eig_roots[j]`.
    pub basis: Vec<Vec<f64>>,
}

impl WorstCaseComponent {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn column_dot(&self, j: usize, w: &[f64]) -> f64 {
        self.basis.iter().zip(w).map(|(row, wi)| row[j] * wi).sum()
    }

    /// `Sigma^{-1} w` through the eigen form.
    pub fn precision_apply(&self, w: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut out = vec![0.0; p];
        for j in 0..p {
            let coef = self.column_dot(j, w) / (self.eig_roots[j] * self.eig_roots[j]);
            for (o, row) in out.iter_mut().zip(&self.basis) {
                *o += coef * row[j];
            }
        }
        out
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let p = self.dim();
        let w: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut quad = 0.0;
        let mut log_det_half = 0.0;
        for j in 0..p {
            let c = self.column_dot(j, &w) / self.eig_roots[j];
            quad += c * c;
            log_det_half += self.eig_roots[j].ln();
        }
        -0.5 * p as f64 * (2.0 * PI).ln() - log_det_half - 0.5 * quad
    }

    /// Ground cost to the nominal component `N(nominal_mean, sigma^2 I)`.
    pub fn ground_cost(&self, nominal_mean: &[f64], sigma: f64) -> f64 {
        gaussian_ground_cost_unchecked(&self.mean, &self.eig_roots, nominal_mean, sigma)
    }
}

fn gaussian_ground_cost_unchecked(mean: &[f64], eig_roots: &[f64], nominal_mean: &[f64], sigma: f64) -> f64 {
    let shift = l2_dist(mean, nominal_mean);
    let spread: f64 = eig_roots.iter().map(|d| (d - sigma) * (d - sigma)).sum();
    (shift * shift + spread).sqrt()
}

/// Gaussian Wasserstein-2 cost between `N(mean, V diag(d^2) V^T)` and
/// `N(nominal_mean, sigma^2 I)`.
///
/// Because the reference covariance is isotropic the trace term reduces to
/// `sum_j (d_j - sigma)^2` whatever the basis.
pub fn gaussian_ground_cost(mean: &[f64], eig_roots: &[f64], nominal_mean: &[f64], sigma: f64) -> Result<f64> {
    if mean.len() != nominal_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: nominal_mean.len(),
            got: mean.len(),
        });
    }
    if eig_roots.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: eig_roots.len(),
        });
    }
    if let Some(bad) = eig_roots.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::invalid(format!(
            "eigenvalue roots must be non-negative, got {bad}"
        )));
    }
    Ok(gaussian_ground_cost_unchecked(mean, eig_roots, nominal_mean, sigma))
}

/// Orthonormal basis with `direction / |direction|` as its first or last
/// column, built from one Householder reflection of the identity.
pub fn build_orthonormal_basis(direction: &[f64], position: BasisPosition) -> Result<Vec<Vec<f64>>> {
    let norm = l2_norm(direction);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid("basis direction must be non-zero and finite"));
    }
    let p = direction.len();
    let j = match position {
        BasisPosition::First => 0,
        BasisPosition::Last => p - 1,
    };
    let u: Vec<f64> = direction.iter().map(|x| x / norm).collect();
    // H = I - 2 w w^T / |w|^2 maps e_j to -sign * u with w = e_j + sign * u.
    // The sign keeps |w| away from zero; column j is flipped back afterwards.
    let sign = if u[j] > 0.0 { 1.0 } else { -1.0 };
    let mut w: Vec<f64> = u.iter().map(|ui| sign * ui).collect();
    w[j] += 1.0;
    let w2 = dot(&w, &w);
    let mut basis = vec![vec![0.0; p]; p];
    for r in 0..p {
        for c in 0..p {
            let id = if r == c { 1.0 } else { 0.0 };
            basis[r][c] = id - 2.0 * w[r] * w[c] / w2;
        }
    }
    if sign > 0.0 {
        for row in basis.iter_mut() {
            row[j] = -row[j];
        }
    }
    // H e_j = -sign * u; force the designated column to exactly +u.
    for (row, ui) in basis.iter_mut().zip(&u) {
        row[j] = *ui;
    }
    Ok(basis)
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|r| (0..p).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn basis_for(direction: &[f64], position: BasisPosition) -> Vec<Vec<f64>> {
    build_orthonormal_basis(direction, position).unwrap_or_else(|_| identity(direction.len()))
}

/// Worst-case component maximizing the density at `x`: the mean slides from
/// `x_hat` toward `x` by `a*` and the covariance stretches along `x - mu*`.
pub fn recover_optimistic_component(
    x: &[f64],
    x_hat: &[f64],
    sol: &ComponentSolution,
    ball: &AmbiguityBall,
) -> WorstCaseComponent {
    let p = x.len();
    let dist = l2_dist(x, x_hat);
    let mean = if dist > 0.0 {
        let t = (sol.a_star / dist).min(1.0);
        axpy_into(t, x, 1.0 - t, x_hat)
    } else {
        x_hat.to_vec()
    };
    let mut eig_roots = vec![ball.sigma; p];
    eig_roots[p - 1] = sol.d_star;
    let direction: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let basis = basis_for(&direction, BasisPosition::Last);
    WorstCaseComponent { mean, eig_roots, basis }
}

/// Worst-case component minimizing the density at `x`: the mean is pushed
/// away from `x` by `a*`, the smallest eigenvalue root sits along `x - mu*`
/// and the remaining roots share the leftover budget equally.
pub fn recover_pessimistic_component(
    x: &[f64],
    x_hat: &[f64],
    sol: &ComponentSolution,
    ball: &AmbiguityBall,
) -> WorstCaseComponent {
    let p = x.len();
    let dist = l2_dist(x, x_hat);
    let mean = if dist > 0.0 {
        let t = sol.a_star / dist;
        axpy_into(-t, x, 1.0 + t, x_hat)
    } else {
        let mut m = x_hat.to_vec();
        m[0] -= sol.a_star;
        m
    };
    let mut eig_roots = vec![sol.d_star; p];
    if p > 1 {
        let slack = ball.epsilon * ball.epsilon - sol.a_star * sol.a_star - (sol.d_star - ball.sigma).powi(2);
        let spread = (ball.sigma + (slack.max(0.0) / (p as f64 - 1.0)).sqrt()).max(ball.sigma);
        for root in eig_roots.iter_mut().skip(1) {
            *root = spread;
        }
    }
    let direction: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
    let basis = basis_for(&direction, BasisPosition::First);
    WorstCaseComponent { mean, eig_roots, basis }
}
