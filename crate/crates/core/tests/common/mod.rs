//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

// Subproblem objectives written in the original (a, d) variables.
pub fn optimistic_natural(a: f64, d: f64, dist: f64, sigma: f64, p: usize) -> f64 {
    d.ln() + (dist - a).powi(2) / (2.0 * d * d) + (p as f64 - 1.0) * sigma.ln()
}

pub fn pessimistic_natural(a: f64, d: f64, dist: f64, eps: f64, sigma: f64, p: usize) -> f64 {
    let mut v = -d.ln() - (dist + a).powi(2) / (2.0 * d * d);
    if p > 1 {
        let slack = (eps * eps - a * a - (d - sigma).powi(2)).max(0.0);
        v -= (p as f64 - 1.0) * (sigma + (slack / (p as f64 - 1.0)).sqrt()).ln();
    }
    v
}

/// Minimum over a `res x res` grid of `a in [0, eps]`, `d - sigma in [0, eps / sqrt(w)]`
/// restricted to `a^2 + w (d - sigma)^2 <= eps^2`, plus `res` points on the
/// curved boundary. Both searches are then refined by repeated zooming
/// around their best point.
pub fn grid_min<F: Fn(f64, f64) -> f64>(f: F, eps: f64, sigma: f64, w: f64, res: usize) -> f64 {
    if eps == 0.0 {
        return f(0.0, sigma);
    }
    let b = eps / w.sqrt();
    let feasible = |a: f64, e: f64| a >= 0.0 && e >= 0.0 && a * a + w * e * e <= eps * eps * (1.0 + 1e-12);
    let scan = |a_lo: f64, a_hi: f64, e_lo: f64, e_hi: f64, n: usize| {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let a = a_lo + (a_hi - a_lo) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let e = e_lo + (e_hi - e_lo) * j as f64 / (n - 1) as f64;
                if feasible(a, e) {
                    let v = f(a, sigma + e);
                    if v < best.0 {
                        best = (v, a, e);
                    }
                }
            }
        }
        best
    };
    let on_arc = |t: f64| f(eps * t.cos().max(0.0), sigma + b * t.sin().max(0.0));
    let arc = |t_lo: f64, t_hi: f64, n: usize| {
        (0..n)
            .map(|k| t_lo + (t_hi - t_lo) * k as f64 / (n - 1) as f64)
            .map(|t| (on_arc(t), t))
            .fold((f64::INFINITY, 0.0), |x, y| if y.0 < x.0 { y } else { x })
    };

    let (mut da, mut de) = (eps / (res - 1) as f64, b / (res - 1) as f64);
    let mut inner = scan(0.0, eps, 0.0, b, res);
    let mut dt = 0.5 * PI / (res - 1) as f64;
    let mut edge = arc(0.0, 0.5 * PI, res);
    for _ in 0..4 {
        let next = scan(
            (inner.1 - 2.0 * da).max(0.0),
            (inner.1 + 2.0 * da).min(eps),
            (inner.2 - 2.0 * de).max(0.0),
            (inner.2 + 2.0 * de).min(b),
            41,
        );
        if next.0 <= inner.0 {
            inner = next;
        }
        da /= 10.0;
        de /= 10.0;
        let next = arc((edge.1 - 2.0 * dt).max(0.0), (edge.1 + 2.0 * dt).min(0.5 * PI), 41);
        if next.0 <= edge.0 {
            edge = next;
        }
        dt /= 10.0;
    }
    inner.0.min(edge.0)
}

pub fn optimistic_grid(dist: f64, eps: f64, sigma: f64, p: usize, res: usize) -> f64 {
    grid_min(|a, d| optimistic_natural(a, d, dist, sigma, p), eps, sigma, 1.0, res)
}

pub fn pessimistic_grid(dist: f64, eps: f64, sigma: f64, p: usize, res: usize) -> f64 {
    grid_min(
        |a, d| pessimistic_natural(a, d, dist, eps, sigma, p),
        eps,
        sigma,
        p as f64,
        res,
    )
}
