//! Two-dimensional projected gradient descent with backtracking line search,
//! the closed-form projection onto a quarter disk, and an exhaustive grid
//! oracle over the same domain.

use serde::{Deserialize, Serialize};

pub type Point2 = [f64; 2];

/// Maximum number of step shrinkages tried in one line search.
pub const MAX_BACKTRACKS: usize = 60;

/// Line-search and stopping parameters shared by the inner and outer solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdParams {
    /// Step shrink factor, in (0, 1).
    pub theta: f64,
    /// Initial trial step, > 0.
    pub beta: f64,
    /// Stop once successive iterates are this close in l2 norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl PgdParams {
    /// Defaults for the 2-D likelihood subproblems.
    pub const INNER: PgdParams = PgdParams {
        theta: 0.5,
        beta: 1.0,
        tol: 1e-8,
        max_iter: 500,
    };

    /// Defaults for the outer recourse descent.
    pub const OUTER: PgdParams = PgdParams {
        theta: 0.5,
        beta: 0.1,
        tol: 1e-6,
        max_iter: 300,
    };

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(crate::Error::invalid(format!(
                "theta must lie in (0,1), got {}",
                self.theta
            )));
        }
        if !(self.beta > 0.0) {
            return Err(crate::Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(crate::Error::invalid("tol must be non-negative"));
        }
        Ok(())
    }
}

impl Default for PgdParams {
    fn default() -> Self {
        Self::INNER
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgdStatus {
    Converged,
    MaxIterations,
    StalledLineSearch,
}

#[derive(Debug, Clone)]
pub struct Pgd2dOutcome {
    pub point: Point2,
    pub value: f64,
    pub converged: bool,
    pub status: PgdStatus,
    pub iterations: usize,
    /// Objective value at the start point followed by one entry per accepted step.
    pub trace: Vec<f64>,
}

#[inline]
fn dist2(a: Point2, b: Point2) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

/// Projected gradient descent on a 2-D objective.
///
/// Each step tries `s = theta^k * beta` for `k = 0, 1, ...` and accepts the
/// first candidate `c = proj(v - s * grad(v))` with
/// `f(c) <= f(v) - |v - c|^2 / (2 s)`. `v0` must already be feasible.
pub fn pgd_2d<F, G, P>(objective: F, gradient: G, projector: P, v0: Point2, params: &PgdParams) -> Pgd2dOutcome
where
    F: Fn(Point2) -> f64,
    G: Fn(Point2) -> Point2,
    P: Fn(Point2) -> Point2,
{
    let mut v = v0;
    let mut value = objective(v);
    let mut trace = vec![value];
    let mut status = PgdStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let g = gradient(v);
        let mut step = params.beta;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let cand = projector([v[0] - step * g[0], v[1] - step * g[1]]);
            let moved = dist2(v, cand);
            let cand_value = objective(cand);
            if cand_value.is_finite() && cand_value <= value - moved / (2.0 * step) {
                accepted = Some((cand, cand_value, moved));
                break;
            }
            step *= params.theta;
        }
        let Some((next, next_value, moved)) = accepted else {
            status = PgdStatus::StalledLineSearch;
            break;
        };
        v = next;
        value = next_value;
        trace.push(value);
        if moved.sqrt() <= params.tol {
            status = PgdStatus::Converged;
            break;
        }
    }

    Pgd2dOutcome {
        point: v,
        value,
        converged: status == PgdStatus::Converged,
        status,
        iterations,
        trace,
    }
}

/// Result of [`pgd_nd`].
#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub status: PgdStatus,
    pub iterations: usize,
    /// Objective value at the start point followed by one entry per accepted step.
    pub trace: Vec<f64>,
}

impl PgdOutcome {
    pub fn converged(&self) -> bool {
        self.status == PgdStatus::Converged
    }
}

/// Projected gradient descent in `R^n` with the same backtracking rule as
/// [`pgd_2d`].
///
/// `evaluate` returns the objective value together with whatever state the
/// gradient needs, so an accepted trial point is never re-solved; `gradient`
/// is only called at accepted points. Errors from either closure abort the
/// descent. `x0` must already be feasible.
pub fn pgd_nd<S, F, G, P>(
    mut evaluate: F,
    mut gradient: G,
    projector: P,
    x0: Vec<f64>,
    params: &PgdParams,
) -> crate::Result<PgdOutcome>
where
    F: FnMut(&[f64]) -> crate::Result<(f64, S)>,
    G: FnMut(&[f64], &S) -> crate::Result<Vec<f64>>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0;
    let (mut value, mut state) = evaluate(&x)?;
    if !value.is_finite() {
        return Err(crate::Error::invalid("objective is not finite at the start point"));
    }
    let mut trace = vec![value];
    let mut status = PgdStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let g = gradient(&x, &state)?;
        let mut step = params.beta;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let cand = projector(&trial);
            let moved: f64 = x.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                accepted = Some((cand, value, None, 0.0));
                break;
            }
            let (cand_value, cand_state) = evaluate(&cand)?;
            if cand_value.is_finite() && cand_value <= value - moved / (2.0 * step) {
                accepted = Some((cand, cand_value, Some(cand_state), moved));
                break;
            }
            step *= params.theta;
        }
        let Some((next, next_value, next_state, moved)) = accepted else {
            status = PgdStatus::StalledLineSearch;
            break;
        };
        x = next;
        value = next_value;
        if let Some(s) = next_state {
            state = s;
        }
        trace.push(value);
        if moved.sqrt() <= params.tol {
            status = PgdStatus::Converged;
            break;
        }
    }

    Ok(PgdOutcome {
        point: x,
        value,
        status,
        iterations,
        trace,
    })
}

/// Euclidean projection onto `{v : v1 >= 0, v2 >= 0, v1^2 + v2^2 <= r^2}`.
///
/// A radius of zero (or below) collapses the set to the origin.
pub fn project_quarter_disk(v: Point2, r: f64) -> Point2 {
    if !(r > 0.0) {
        return [0.0, 0.0];
    }
    let [v1, v2] = v;
    match (v1 >= 0.0, v2 >= 0.0) {
        (true, true) => {
            let norm = v1.hypot(v2);
            if norm <= r {
                v
            } else {
                [r * v1 / norm, r * v2 / norm]
            }
        }
        (false, true) => [0.0, v2.min(r)],
        (true, false) => [v1.min(r), 0.0],
        (false, false) => [0.0, 0.0],
    }
}

/// Exhaustive minimum of `objective` over a `resolution x resolution` grid
/// on `[0, r]^2`, skipping points outside the disk of radius `r`, plus
/// `resolution` equally spaced points on the quarter arc. Both searches are
/// then refined four times on a 41-point grid spanning two cells around
/// their best point, each time shrinking the cell tenfold.
///
/// Returns `(value, argmin)`. Resolutions below 2 are raised to 2. A radius
/// of zero evaluates the origin only.
pub fn grid_oracle_2d<F>(objective: F, r: f64, resolution: usize) -> (f64, Point2)
where
    F: Fn(Point2) -> f64,
{
    if !(r > 0.0) {
        return (objective([0.0, 0.0]), [0.0, 0.0]);
    }
    let res = resolution.max(2);
    let r2 = r * r;
    let scan = |lo: Point2, hi: Point2, n: usize| {
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..n {
            let v1 = if i == n - 1 {
                hi[0]
            } else {
                lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64
            };
            for j in 0..n {
                let v2 = if j == n - 1 {
                    hi[1]
                } else {
                    lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64
                };
                if v1 * v1 + v2 * v2 > r2 * (1.0 + 1e-12) {
                    break;
                }
                let value = objective([v1, v2]);
                if value < best.0 {
                    best = (value, [v1, v2]);
                }
            }
        }
        best
    };
    let arc = |lo: f64, hi: f64, n: usize| {
        let mut best = (f64::INFINITY, [0.0, 0.0], 0.0);
        for k in 0..n {
            let t = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let v = [(r * t.cos()).max(0.0), (r * t.sin()).max(0.0)];
            let value = objective(v);
            if value < best.0 {
                best = (value, v, t);
            }
        }
        best
    };

    let mut h = r / (res - 1) as f64;
    let mut inner = scan([0.0, 0.0], [r, r], res);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut dt = half_pi / (res - 1) as f64;
    let mut edge = arc(0.0, half_pi, res);
    for _ in 0..4 {
        let c = inner.1;
        let next = scan(
            [(c[0] - 2.0 * h).max(0.0), (c[1] - 2.0 * h).max(0.0)],
            [(c[0] + 2.0 * h).min(r), (c[1] + 2.0 * h).min(r)],
            41,
        );
        if next.0 < inner.0 {
            inner = next;
        }
        h /= 10.0;
        let next = arc((edge.2 - 2.0 * dt).max(0.0), (edge.2 + 2.0 * dt).min(half_pi), 41);
        if next.0 < edge.0 {
            edge = next;
        }
        dt /= 10.0;
    }
    if edge.0 < inner.0 {
        (edge.0, edge.1)
    } else {
        inner
    }
}
