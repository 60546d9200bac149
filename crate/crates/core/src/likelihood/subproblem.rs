//! The per-component two-dimensional subproblems.
//!
//! Maximizing (minimizing) the likelihood of `x` over one Gaussian component
//! whose mean and covariance stay within ground cost `epsilon` of
//! `N(x_hat, sigma^2 I)` reduces to a problem in two scalars: the mean shift
//! `a = |mu - x_hat|` and one extreme eigenvalue root `d` of the covariance.
//! Only `dist = |x - x_hat|` enters, so every solver here takes that scalar.
//!
//! Both problems are solved in a reparameterization whose feasible set is a
//! quarter disk, which makes the projection closed-form.

use serde::{Deserialize, Serialize};

use super::pgd::{pgd_2d, project_quarter_disk, PgdParams, Point2};
use crate::{Error, Result};

/// Default perturbation added under the square root of the pessimistic objective.
pub const DEFAULT_ZETA: f64 = 1e-8;

/// Radius, smoothing width and dimension of one ambiguity ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityBall {
    pub epsilon: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl AmbiguityBall {
    pub fn new(epsilon: f64, sigma: f64, dim: usize) -> Result<Self> {
        let ball = Self { epsilon, sigma, dim };
        ball.validate()?;
        Ok(ball)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "ambiguity radius must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "smoothing sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Solution of one 2-D subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSolution {
    /// Optimal value (for the pessimistic problem: the unperturbed objective
    /// evaluated at the perturbed minimizer).
    pub alpha: f64,
    /// Mean shift `|mu* - x_hat|`.
    pub a_star: f64,
    /// Largest (optimistic) or smallest (pessimistic) eigenvalue root.
    pub d_star: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Value of the objective actually minimized. Equals `alpha` for the
    /// optimistic problem.
    pub perturbed_alpha: f64,
}

/// Optimistic subproblem in coordinates `v = (a, d - sigma)` over the quarter
/// disk of radius `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct OptimisticSubproblem {
    pub dist: f64,
    pub ball: AmbiguityBall,
}

impl OptimisticSubproblem {
    pub fn radius(&self) -> f64 {
        self.ball.epsilon
    }

    pub fn to_natural(&self, v: Point2) -> (f64, f64) {
        (v[0], v[1] + self.ball.sigma)
    }

    pub fn value(&self, v: Point2) -> f64 {
        let sigma = self.ball.sigma;
        let d = v[1] + sigma;
        let gap = self.dist - v[0];
        d.ln() + gap * gap / (2.0 * d * d) + (self.ball.dim as f64 - 1.0) * sigma.ln()
    }

    pub fn gradient(&self, v: Point2) -> Point2 {
        let d = v[1] + self.ball.sigma;
        let gap = self.dist - v[0];
        let d2 = d * d;
        [-gap / d2, 1.0 / d - gap * gap / (d2 * d)]
    }
}

/// Pessimistic subproblem in coordinates `u = (a / sqrt(p), d - sigma)` over
/// the quarter disk of radius `epsilon / sqrt(p)`.
///
/// For `p = 1` the eigenvalue-spreading term vanishes and the coordinates are
/// `u = (a, d - sigma)` with radius `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct PessimisticSubproblem {
    pub dist: f64,
    pub ball: AmbiguityBall,
    pub zeta: f64,
}

impl PessimisticSubproblem {
    fn scale(&self) -> f64 {
        (self.ball.dim as f64).sqrt()
    }

    pub fn radius(&self) -> f64 {
        if self.ball.dim == 1 {
            self.ball.epsilon
        } else {
            self.ball.epsilon / self.scale()
        }
    }

    pub fn to_natural(&self, u: Point2) -> (f64, f64) {
        let a = if self.ball.dim == 1 { u[0] } else { self.scale() * u[0] };
        (a, u[1] + self.ball.sigma)
    }

    fn eval(&self, u: Point2, zeta: f64) -> f64 {
        let (a, d) = self.to_natural(u);
        let reach = self.dist + a;
        let mut value = -d.ln() - reach * reach / (2.0 * d * d);
        if self.ball.dim > 1 {
            let k = self.ball.dim as f64 - 1.0;
            let slack = zeta + self.ball.epsilon * self.ball.epsilon - a * a - u[1] * u[1];
            value -= k * (self.ball.sigma + (slack.max(0.0) / k).sqrt()).ln();
        }
        value
    }

    /// The perturbed objective that the descent minimizes.
    pub fn value(&self, u: Point2) -> f64 {
        self.eval(u, self.zeta)
    }

    /// The objective with `zeta = 0`.
    pub fn unperturbed_value(&self, u: Point2) -> f64 {
        self.eval(u, 0.0)
    }

    pub fn gradient(&self, u: Point2) -> Point2 {
        let (a, d) = self.to_natural(u);
        let reach = self.dist + a;
        let d2 = d * d;
        if self.ball.dim == 1 {
            return [-reach / d2, -1.0 / d + reach * reach / (d2 * d)];
        }
        let p = self.ball.dim as f64;
        let k = p - 1.0;
        let slack = self.zeta + self.ball.epsilon * self.ball.epsilon - a * a - u[1] * u[1];
        let q = (slack.max(f64::MIN_POSITIVE) / k).sqrt();
        let g = self.ball.sigma + q;
        [
            -p.sqrt() * reach / d2 + p * u[0] / (g * q),
            -1.0 / d + reach * reach / (d2 * d) + u[1] / (g * q),
        ]
    }
}

fn check_dist(dist: f64) -> Result<()> {
    if !(dist >= 0.0) || !dist.is_finite() {
        return Err(Error::invalid(format!(
            "distance must be finite and non-negative, got {dist}"
        )));
    }
    Ok(())
}

/// Starting points: the origin, both axis corners, the arc midpoint and the
/// best point of a coarse polar scan. Only the origin when `r = 0`.
fn starts(r: f64, value: impl Fn(Point2) -> f64) -> Vec<Point2> {
    if r == 0.0 {
        return vec![[0.0, 0.0]];
    }
    let h = r * std::f64::consts::FRAC_1_SQRT_2;
    let mut best = ([0.0, 0.0], value([0.0, 0.0]));
    for i in 1..=SCAN_RADII {
        let rho = r * i as f64 / SCAN_RADII as f64;
        for j in 0..=SCAN_ANGLES {
            let t = std::f64::consts::FRAC_PI_2 * j as f64 / SCAN_ANGLES as f64;
            let u = [rho * t.cos(), rho * t.sin()];
            let v = value(u);
            if v < best.1 {
                best = (u, v);
            }
        }
    }
    vec![[0.0, 0.0], [0.0, r], [r, 0.0], [h, h], best.0]
}

const SCAN_RADII: usize = 8;
const SCAN_ANGLES: usize = 8;

/// Solves the optimistic subproblem with the default inner parameters.
pub fn optimistic_alpha(dist: f64, ball: &AmbiguityBall) -> Result<ComponentSolution> {
    optimistic_alpha_with(dist, ball, &PgdParams::INNER)
}

pub fn optimistic_alpha_with(dist: f64, ball: &AmbiguityBall, params: &PgdParams) -> Result<ComponentSolution> {
    ball.validate()?;
    check_dist(dist)?;
    let sub = OptimisticSubproblem { dist, ball: *ball };
    if ball.epsilon >= dist {
        // The mean can sit on x with the covariance left at sigma^2 I.
        let alpha = ball.dim as f64 * ball.sigma.ln();
        return Ok(ComponentSolution {
            alpha,
            a_star: dist,
            d_star: ball.sigma,
            converged: true,
            iterations: 0,
            perturbed_alpha: alpha,
        });
    }
    Ok(optimistic_alpha_pgd(&sub, params))
}

/// The PGD route for the optimistic subproblem, without the closed-form
/// shortcut for `epsilon >= dist`.
pub fn optimistic_alpha_pgd(sub: &OptimisticSubproblem, params: &PgdParams) -> ComponentSolution {
    lowest(optimistic_alpha_starts(sub, params))
}

/// One PGD solution per starting point (a single one when the radius is 0).
pub fn optimistic_alpha_starts(sub: &OptimisticSubproblem, params: &PgdParams) -> Vec<ComponentSolution> {
    let r = sub.radius();
    starts(r, |v| sub.value(v))
        .into_iter()
        .map(|start| {
            let out = pgd_2d(
                |v| sub.value(v),
                |v| sub.gradient(v),
                |v| project_quarter_disk(v, r),
                start,
                params,
            );
            let (a, d) = sub.to_natural(out.point);
            ComponentSolution {
                alpha: out.value,
                a_star: a,
                d_star: d,
                converged: out.converged,
                iterations: out.iterations,
                perturbed_alpha: out.value,
            }
        })
        .collect()
}

fn lowest(sols: Vec<ComponentSolution>) -> ComponentSolution {
    sols.into_iter()
        .reduce(|best, c| if c.alpha < best.alpha { c } else { best })
        .expect("at least one start")
}

/// Relative perturbation levels visited before the target `zeta`.
const CONTINUATION_LEVELS: [f64; 3] = [1e-2, 1e-4, 1e-6];

/// Runs the pessimistic descent through a decreasing sequence of
/// perturbations, warm-starting each level at the previous solution.
///
/// Near the corner `a = epsilon, d = sigma` the objective's gradient blows up
/// like `zeta^{-1/2}`; a single descent at a tiny `zeta` that lands there
/// first can only take steps of order `zeta`, and stops far from the
/// minimizer. The coarse levels keep the gradient bounded while the iterate
/// finds its basin.
fn pessimistic_continuation(
    sub: &PessimisticSubproblem,
    start: Point2,
    params: &PgdParams,
) -> (Point2, super::pgd::Pgd2dOutcome) {
    let r = sub.radius();
    let scale = sub.ball.epsilon * sub.ball.epsilon;
    let mut point = start;
    let mut iterations = 0;
    for level in CONTINUATION_LEVELS {
        let zeta = level * scale;
        if !(zeta > sub.zeta) || sub.ball.dim == 1 {
            continue;
        }
        let coarse = PessimisticSubproblem { zeta, ..*sub };
        let out = pgd_2d(
            |u| coarse.value(u),
            |u| coarse.gradient(u),
            |u| project_quarter_disk(u, r),
            point,
            params,
        );
        iterations += out.iterations;
        point = out.point;
    }
    let mut out = pgd_2d(
        |u| sub.value(u),
        |u| sub.gradient(u),
        |u| project_quarter_disk(u, r),
        point,
        params,
    );
    out.iterations += iterations;
    (out.point, out)
}

/// Solves the (perturbed) pessimistic subproblem with the default inner parameters.
pub fn pessimistic_alpha(dist: f64, ball: &AmbiguityBall, zeta: f64) -> Result<ComponentSolution> {
    pessimistic_alpha_with(dist, ball, zeta, &PgdParams::INNER)
}

pub fn pessimistic_alpha_with(
    dist: f64,
    ball: &AmbiguityBall,
    zeta: f64,
    params: &PgdParams,
) -> Result<ComponentSolution> {
    ball.validate()?;
    check_dist(dist)?;
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::invalid(format!("zeta must be positive, got {zeta}")));
    }
    let sub = PessimisticSubproblem {
        dist,
        ball: *ball,
        zeta,
    };
    Ok(lowest(pessimistic_alpha_starts(&sub, params)))
}

/// One solution per starting point, each reporting the unperturbed value at
/// its perturbed argmin.
pub fn pessimistic_alpha_starts(sub: &PessimisticSubproblem, params: &PgdParams) -> Vec<ComponentSolution> {
    let r = sub.radius();
    starts(r, |u| sub.value(u))
        .into_iter()
        .map(|start| {
            let (point, out) = pessimistic_continuation(sub, start, params);
            let (a, d) = sub.to_natural(point);
            ComponentSolution {
                alpha: sub.unperturbed_value(point),
                a_star: a,
                d_star: d,
                converged: out.converged,
                iterations: out.iterations,
                perturbed_alpha: out.value,
            }
        })
        .collect()
}
