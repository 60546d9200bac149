//! Recourse generators: KDE-Bayesian, robust Bayesian, and the Wachter
//! gradient baseline, over an l1 ball with an immutable-feature mask.

use serde::{Deserialize, Serialize};

use crate::classifier::MlpModel;
use crate::likelihood::{
    optimistic_bound, pessimistic_bound, pgd_nd, recover_optimistic_component, recover_pessimistic_component,
    AmbiguityBall, BoundSolver, LikelihoodBound, PgdParams, PgdStatus, DEFAULT_ZETA,
};
use crate::linalg::{l1_dist, l2_dist_sq, log_sum_exp, softmax};
use crate::sampler::LocalSampleSet;
use crate::{Error, Result};

/// Which l1 ball the recourse must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ConstraintMode {
    /// `|x - x0|_1 <= |x0 - x_b|_1 + delta_plus`.
    AroundInput,
    /// `|x - x_b|_1 <= delta_prime`.
    AroundBoundary { delta_prime: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GradientMode {
    /// Gradient at the recovered worst-case components.
    Envelope,
    /// Central differences of the log objective.
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecourseConfig {
    pub delta_plus: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Smoothing std; also the KDE bandwidth.
    pub sigma: f64,
    pub zeta: f64,
    pub outer: PgdParams,
    pub inner: PgdParams,
    /// Immutable features; empty means none.
    pub frozen_mask: Vec<bool>,
    pub constraint: ConstraintMode,
    pub gradient: GradientMode,
}

impl Default for RecourseConfig {
    fn default() -> Self {
        Self {
            delta_plus: 0.0,
            eps0: 0.0,
            eps1: 0.0,
            sigma: 1.0,
            zeta: DEFAULT_ZETA,
            outer: PgdParams::OUTER,
            inner: PgdParams::INNER,
            frozen_mask: Vec::new(),
            constraint: ConstraintMode::AroundInput,
            gradient: GradientMode::Envelope,
        }
    }
}

impl RecourseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_plus >= 0.0) {
            return Err(Error::invalid("delta_plus must be non-negative"));
        }
        if !(self.eps0 >= 0.0 && self.eps1 >= 0.0) {
            return Err(Error::invalid("eps0 and eps1 must be non-negative"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::invalid("zeta must be positive"));
        }
        if let ConstraintMode::AroundBoundary { delta_prime } = self.constraint {
            if !(delta_prime >= 0.0) {
                return Err(Error::invalid("delta_prime must be non-negative"));
            }
        }
        if let GradientMode::FiniteDifference { step } = self.gradient {
            if !(step > 0.0) {
                return Err(Error::invalid("finite-difference step must be positive"));
            }
        }
        self.outer.validate()?;
        self.inner.validate()
    }

    fn is_frozen(&self, j: usize) -> bool {
        self.frozen_mask.get(j).copied().unwrap_or(false)
    }

    fn check_mask(&self, p: usize) -> Result<()> {
        if !self.frozen_mask.is_empty() && self.frozen_mask.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: self.frozen_mask.len(),
            });
        }
        Ok(())
    }

    fn solver(&self) -> BoundSolver<'static> {
        BoundSolver {
            params: self.inner,
            zeta: self.zeta,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kde,
    Robust,
    Wachter,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kde => "kde",
            Method::Robust => "robust",
            Method::Wachter => "wachter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseResult {
    pub x_prime: Vec<f64>,
    /// l1 distance to the input.
    pub cost: f64,
    pub objective_trace: Vec<f64>,
    /// Whether the classifier accepts `x_prime`. The Bayesian generators do
    /// not see the classifier and leave this `false` until
    /// [`RecourseResult::validate_with`] runs.
    pub converged: bool,
    /// Whether the optimizer met its stopping tolerance.
    pub optimizer_converged: bool,
    pub status: PgdStatus,
    pub iterations: usize,
    pub method: Method,
}

impl RecourseResult {
    fn new(
        x0: &[f64],
        x_prime: Vec<f64>,
        trace: Vec<f64>,
        status: PgdStatus,
        iterations: usize,
        method: Method,
    ) -> Self {
        Self {
            cost: l1_dist(&x_prime, x0),
            x_prime,
            objective_trace: trace,
            converged: false,
            optimizer_converged: status == PgdStatus::Converged,
            status,
            iterations,
            method,
        }
    }

    /// Sets `converged` to whether `model` labels the recourse favorable.
    pub fn validate_with(&mut self, model: &MlpModel) -> Result<bool> {
        self.converged = model.predict_label(&self.x_prime)? == 1;
        Ok(self.converged)
    }
}

/// Euclidean projection onto `{y : |y - center|_1 <= delta}` with frozen
/// coordinates pinned to `center`.
pub fn project_l1_ball(x: &[f64], center: &[f64], delta: f64, frozen_mask: &[bool]) -> Vec<f64> {
    let frozen = |j: usize| frozen_mask.get(j).copied().unwrap_or(false);
    let mut out: Vec<f64> = x
        .iter()
        .zip(center)
        .enumerate()
        .map(|(j, (xi, ci))| if frozen(j) { *ci } else { *xi })
        .collect();
    let delta = delta.max(0.0);
    let free: Vec<usize> = (0..x.len()).filter(|&j| !frozen(j)).collect();
    let norm: f64 = free.iter().map(|&j| (out[j] - center[j]).abs()).sum();
    if norm <= delta {
        return out;
    }
    if delta == 0.0 {
        return center.to_vec();
    }
    let mut mags: Vec<f64> = free.iter().map(|&j| (out[j] - center[j]).abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - delta) / (k + 1) as f64;
        if *m > t {
            tau = t;
        } else {
            break;
        }
    }
    for &j in &free {
        let w = out[j] - center[j];
        out[j] = center[j] + w.signum() * (w.abs() - tau).max(0.0);
    }
    out
}

/// Center and radius of the feasible l1 ball.
fn feasible_ball(x0: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> (Vec<f64>, f64) {
    match cfg.constraint {
        ConstraintMode::AroundInput => (x0.to_vec(), l1_dist(x0, &ls.x_b) + cfg.delta_plus),
        ConstraintMode::AroundBoundary { delta_prime } => {
            let center = ls
                .x_b
                .iter()
                .enumerate()
                .map(|(j, v)| if cfg.is_frozen(j) { x0[j] } else { *v })
                .collect();
            (center, delta_prime)
        }
    }
}

fn check_inputs(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<()> {
    cfg.validate()?;
    ls.validate()?;
    if x.len() != ls.dim() {
        return Err(Error::DimensionMismatch {
            expected: ls.dim(),
            got: x.len(),
        });
    }
    cfg.check_mask(x.len())
}

fn kernel_logs(x: &[f64], samples: &[Vec<f64>], h: f64) -> Vec<f64> {
    let s = 1.0 / (2.0 * h * h);
    samples.iter().map(|xi| -l2_dist_sq(x, xi) * s).collect()
}

/// `log` of the Gaussian-kernel ratio `sum_{I0} k(x, x_i) / sum_{I1} k(x, x_i)`.
pub fn kde_log_objective(x: &[f64], ls: &LocalSampleSet, h: f64) -> Result<f64> {
    ls.validate()?;
    if !(h > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    Ok(log_sum_exp(&kernel_logs(x, &ls.samples0, h)) - log_sum_exp(&kernel_logs(x, &ls.samples1, h)))
}

/// The KDE posterior-odds ratio (not in log space).
pub fn kde_objective(x: &[f64], ls: &LocalSampleSet, h: f64) -> Result<f64> {
    kde_log_objective(x, ls, h).map(f64::exp)
}

fn kernel_score(x: &[f64], samples: &[Vec<f64>], h: f64) -> Vec<f64> {
    let w = softmax(&kernel_logs(x, samples, h));
    let mut g = vec![0.0; x.len()];
    for (wi, xi) in w.iter().zip(samples) {
        for (gj, (a, b)) in g.iter_mut().zip(x.iter().zip(xi)) {
            *gj -= wi * (a - b) / (h * h);
        }
    }
    g
}

/// Gradient of [`kde_log_objective`].
pub fn kde_log_gradient(x: &[f64], ls: &LocalSampleSet, h: f64) -> Result<Vec<f64>> {
    ls.validate()?;
    let g0 = kernel_score(x, &ls.samples0, h);
    let g1 = kernel_score(x, &ls.samples1, h);
    Ok(g0.iter().zip(&g1).map(|(a, b)| a - b).collect())
}

fn mask_gradient(mut g: Vec<f64>, cfg: &RecourseConfig) -> Vec<f64> {
    for (j, gj) in g.iter_mut().enumerate() {
        if cfg.is_frozen(j) {
            *gj = 0.0;
        }
    }
    g
}

fn finite_difference<F>(x: &[f64], step: f64, cfg: &RecourseConfig, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        if cfg.is_frozen(j) {
            continue;
        }
        probe[j] = x[j] + step;
        let up = f(&probe)?;
        probe[j] = x[j] - step;
        let down = f(&probe)?;
        probe[j] = x[j];
        g[j] = (up - down) / (2.0 * step);
    }
    Ok(g)
}

/// Projected gradient descent on the log KDE ratio, from `x_b` projected
/// into the feasible set.
pub fn kde_recourse(x0: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<RecourseResult> {
    check_inputs(x0, ls, cfg)?;
    let (center, delta) = feasible_ball(x0, ls, cfg);
    let mask = cfg.frozen_mask.clone();
    let project = |y: &[f64]| project_l1_ball(y, &center, delta, &mask);
    let start = project(&ls.x_b);
    let h = cfg.sigma;
    let out = pgd_nd(
        |x| Ok((kde_log_objective(x, ls, h)?, ())),
        |x, _| match cfg.gradient {
            GradientMode::Envelope => Ok(mask_gradient(kde_log_gradient(x, ls, h)?, cfg)),
            GradientMode::FiniteDifference { step } => finite_difference(x, step, cfg, |y| kde_log_objective(y, ls, h)),
        },
        project,
        start,
        &cfg.outer,
    )?;
    Ok(RecourseResult::new(
        x0,
        out.point,
        out.trace,
        out.status,
        out.iterations,
        Method::Kde,
    ))
}

/// The robust objective at one point, with the bounds behind it.
#[derive(Debug, Clone)]
pub struct RobustEvaluation {
    /// `log F(x)`.
    pub log_value: f64,
    pub optimistic: LikelihoodBound,
    pub pessimistic: LikelihoodBound,
}

/// Evaluates `log F(x) = log gamma0 - log gamma1 + log L_opt(x) - log L_pes(x)`.
pub fn robust_evaluate(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<RobustEvaluation> {
    let p = x.len();
    let solver = cfg.solver();
    let optimistic = optimistic_bound(x, &ls.samples0, &AmbiguityBall::new(cfg.eps0, cfg.sigma, p)?, &solver)?;
    let pessimistic = pessimistic_bound(x, &ls.samples1, &AmbiguityBall::new(cfg.eps1, cfg.sigma, p)?, &solver)?;
    Ok(RobustEvaluation {
        log_value: ls.gamma0.ln() - ls.gamma1.ln() + optimistic.log_likelihood - pessimistic.log_likelihood,
        optimistic,
        pessimistic,
    })
}

/// `log F(x)` for the robust problem.
pub fn robust_log_objective(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<f64> {
    check_inputs(x, ls, cfg)?;
    Ok(robust_evaluate(x, ls, cfg)?.log_value)
}

/// `F(x)`, the worst-case posterior odds ratio.
pub fn robust_objective(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<f64> {
    robust_log_objective(x, ls, cfg).map(f64::exp)
}

/// Envelope gradient of `log F` given the bounds already solved at `x`.
pub fn robust_gradient_at(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig, eval: &RobustEvaluation) -> Vec<f64> {
    let p = x.len();
    let ball0 = AmbiguityBall {
        epsilon: cfg.eps0,
        sigma: cfg.sigma,
        dim: p,
    };
    let ball1 = AmbiguityBall {
        epsilon: cfg.eps1,
        sigma: cfg.sigma,
        dim: p,
    };
    let mut g = vec![0.0; p];
    let neg: Vec<f64> = eval.optimistic.components.iter().map(|c| -c.alpha).collect();
    for ((w, sol), xi) in softmax(&neg).iter().zip(&eval.optimistic.components).zip(&ls.samples0) {
        let comp = recover_optimistic_component(x, xi, sol, &ball0);
        let r: Vec<f64> = x.iter().zip(&comp.mean).map(|(a, b)| a - b).collect();
        for (gj, s) in g.iter_mut().zip(comp.precision_apply(&r)) {
            *gj -= w * s;
        }
    }
    let pos: Vec<f64> = eval.pessimistic.components.iter().map(|c| c.alpha).collect();
    for ((w, sol), xi) in softmax(&pos).iter().zip(&eval.pessimistic.components).zip(&ls.samples1) {
        let comp = recover_pessimistic_component(x, xi, sol, &ball1);
        let r: Vec<f64> = x.iter().zip(&comp.mean).map(|(a, b)| a - b).collect();
        for (gj, s) in g.iter_mut().zip(comp.precision_apply(&r)) {
            *gj += w * s;
        }
    }
    g
}

/// Envelope gradient of `log F` at `x`.
pub fn robust_gradient(x: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<Vec<f64>> {
    check_inputs(x, ls, cfg)?;
    let eval = robust_evaluate(x, ls, cfg)?;
    Ok(robust_gradient_at(x, ls, cfg, &eval))
}

/// Projected gradient descent on `log F`, from `x_b` projected into the
/// feasible set.
pub fn robust_recourse(x0: &[f64], ls: &LocalSampleSet, cfg: &RecourseConfig) -> Result<RecourseResult> {
    check_inputs(x0, ls, cfg)?;
    let (center, delta) = feasible_ball(x0, ls, cfg);
    let mask = cfg.frozen_mask.clone();
    let project = |y: &[f64]| project_l1_ball(y, &center, delta, &mask);
    let start = project(&ls.x_b);
    let out = pgd_nd(
        |x| {
            let eval = robust_evaluate(x, ls, cfg)?;
            Ok((eval.log_value, eval))
        },
        |x, eval| match cfg.gradient {
            GradientMode::Envelope => Ok(mask_gradient(robust_gradient_at(x, ls, cfg, eval), cfg)),
            GradientMode::FiniteDifference { step } => {
                finite_difference(x, step, cfg, |y| Ok(robust_evaluate(y, ls, cfg)?.log_value))
            }
        },
        project,
        start,
        &cfg.outer,
    )?;
    Ok(RecourseResult::new(
        x0,
        out.point,
        out.trace,
        out.status,
        out.iterations,
        Method::Robust,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WachterParams {
    /// Target probability for the squared prediction loss.
    pub target: f64,
    pub lambda0: f64,
    pub max_doublings: usize,
    pub learning_rate: f64,
    /// Gradient steps per value of lambda.
    pub max_iter: usize,
    /// Width of the quadratic part of the smoothed absolute value.
    pub smooth_width: f64,
}

impl Default for WachterParams {
    fn default() -> Self {
        Self {
            target: 0.55,
            lambda0: 0.1,
            max_doublings: 10,
            learning_rate: 0.01,
            max_iter: 2000,
            smooth_width: 1e-6,
        }
    }
}

/// Derivative of the smoothed absolute value (quadratic within `w` of 0).
fn smooth_abs_grad(u: f64, w: f64) -> f64 {
    if u.abs() >= w {
        u.signum()
    } else {
        u / w
    }
}

fn smooth_abs(u: f64, w: f64) -> f64 {
    if u.abs() >= w {
        u.abs()
    } else {
        0.5 * (u * u / w + w)
    }
}

/// Wachter-style counterfactual: gradient descent on
/// `lambda (f(x) - target)^2 + smooth |x - x0|_1` from `x0`, doubling
/// `lambda` until some iterate is classified favorable. Returns the cheapest
/// favorable iterate of the first successful `lambda`; otherwise the last
/// iterate, unconverged.
pub fn wachter_recourse(
    x0: &[f64],
    model: &MlpModel,
    frozen_mask: &[bool],
    params: &WachterParams,
) -> Result<RecourseResult> {
    if model.predict_label(x0)? == 1 {
        return Err(Error::AlreadyFavorable);
    }
    if !frozen_mask.is_empty() && frozen_mask.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: frozen_mask.len(),
        });
    }
    if !(params.lambda0 > 0.0 && params.learning_rate > 0.0 && params.smooth_width > 0.0) {
        return Err(Error::invalid(
            "wachter lambda0, learning_rate and smooth_width must be positive",
        ));
    }
    let frozen = |j: usize| frozen_mask.get(j).copied().unwrap_or(false);
    let w = params.smooth_width;
    let mut lambda = params.lambda0;
    let mut trace = Vec::new();
    let mut last = x0.to_vec();
    let mut iterations = 0;
    for _ in 0..=params.max_doublings {
        let mut x = x0.to_vec();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..params.max_iter {
            let (prob, pg) = model.proba_and_input_gradient(&x)?;
            let loss = lambda * (prob - params.target).powi(2)
                + x.iter().zip(x0).map(|(a, b)| smooth_abs(a - b, w)).sum::<f64>();
            trace.push(loss);
            iterations += 1;
            if prob >= 0.5 {
                let cost = l1_dist(&x, x0);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, x.clone()));
                }
            }
            let coef = 2.0 * lambda * (prob - params.target);
            for j in 0..x.len() {
                if frozen(j) {
                    continue;
                }
                x[j] -= params.learning_rate * (coef * pg[j] + smooth_abs_grad(x[j] - x0[j], w));
            }
        }
        if model.label(&x) == 1 {
            let cost = l1_dist(&x, x0);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, x.clone()));
            }
        }
        if let Some((_, xb)) = best {
            let mut r = RecourseResult::new(x0, xb, trace, PgdStatus::Converged, iterations, Method::Wachter);
            r.converged = true;
            return Ok(r);
        }
        last = x;
        lambda *= 2.0;
    }
    Ok(RecourseResult::new(
        x0,
        last,
        trace,
        PgdStatus::MaxIterations,
        iterations,
        Method::Wachter,
    ))
}
