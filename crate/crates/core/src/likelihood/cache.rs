//! Memoization of subproblem solutions.
//!
//! A component's solution depends on `x` only through `dist = |x - x_hat|`,
//! so repeated evaluations at the same point (objective, then gradient, then
//! line-search retries) can share work. Distances are quantized to 1e-12.

use std::collections::HashMap;
use std::sync::Mutex;

use super::pgd::PgdParams;
use super::subproblem::{AmbiguityBall, ComponentSolution};
use crate::Result;

const QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubproblemKind {
    Optimistic,
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    kind: SubproblemKind,
    dist: i64,
    epsilon: u64,
    sigma: u64,
    dim: usize,
    zeta: u64,
    params: [u64; 3],
    max_iter: usize,
}

/// Thread-safe solution cache keyed on `(kind, dist, ball, zeta, params)`.
#[derive(Debug, Default)]
pub struct AlphaCache {
    map: Mutex<HashMap<Key, ComponentSolution>>,
}

impl AlphaCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.lock().expect("cache lock poisoned").clear();
    }

    pub(crate) fn get_or_try_insert(
        &self,
        kind: SubproblemKind,
        dist: f64,
        ball: &AmbiguityBall,
        zeta: f64,
        params: &PgdParams,
        solve: impl FnOnce() -> Result<ComponentSolution>,
    ) -> Result<ComponentSolution> {
        let key = Key {
            kind,
            dist: (dist / QUANTUM).round() as i64,
            epsilon: ball.epsilon.to_bits(),
            sigma: ball.sigma.to_bits(),
            dim: ball.dim,
            zeta: if kind == SubproblemKind::Pessimistic {
                zeta.to_bits()
            } else {
                0
            },
            params: [params.theta.to_bits(), params.beta.to_bits(), params.tol.to_bits()],
            max_iter: params.max_iter,
        };
        if let Some(hit) = self.map.lock().expect("cache lock poisoned").get(&key) {
            return Ok(*hit);
        }
        let sol = solve()?;
        self.map.lock().expect("cache lock poisoned").insert(key, sol);
        Ok(sol)
    }
}
