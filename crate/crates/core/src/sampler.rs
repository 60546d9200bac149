//! Local sampling around the decision boundary: nearest favorable training
//! points, bisection onto the boundary, and uniform samples in an l2 ball
//! labelled by the classifier.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifier::MlpModel;
use crate::data::Dataset;
use crate::linalg::{l1_dist, l2_dist, l2_norm};
use crate::{par, Error, Result};

/// Maximum number of bisection steps.
pub const MAX_BISECTIONS: usize = 60;

fn check_input(x0: &[f64], model: &MlpModel) -> Result<()> {
    model.predict_proba(x0)?;
    if model.label(x0) == 1 {
        return Err(Error::AlreadyFavorable);
    }
    Ok(())
}

/// Favorable training points nearest to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactuals {
    pub points: Vec<Vec<f64>>,
    /// Row indices into the dataset, aligned with `points`.
    pub indices: Vec<usize>,
    /// Set when fewer than the requested number were available.
    pub short: bool,
}

/// The `k` rows predicted favorable that are nearest to `x0` in l1,
/// ascending, ties broken by row index.
pub fn nearest_counterfactuals(x0: &[f64], data: &Dataset, model: &MlpModel, k: usize) -> Result<Counterfactuals> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if data.dim() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: x0.len(),
        });
    }
    check_input(x0, model)?;
    let labels = par::map(&data.features, |x| model.label(x));
    let mut ranked: Vec<(f64, usize)> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == 1)
        .map(|(i, _)| (l1_dist(&data.features[i], x0), i))
        .collect();
    if ranked.is_empty() {
        return Err(Error::DegenerateData("no training point is predicted favorable".into()));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let short = ranked.len() < k;
    ranked.truncate(k);
    Ok(Counterfactuals {
        points: ranked.iter().map(|(_, i)| data.features[*i].clone()).collect(),
        indices: ranked.iter().map(|(_, i)| *i).collect(),
        short,
    })
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Bisection on the segment between two oppositely classified points.
///
/// Stops once a favorable midpoint has probability within `tol` of 0.5, or
/// the bracket is at most `tol` wide in the segment parameter, or after
/// [`MAX_BISECTIONS`] steps. Returns the favorable end of the final bracket,
/// so the result is always classified 1.
pub fn boundary_bisection(x0: &[f64], x1: &[f64], model: &MlpModel, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    if x0.len() != x1.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: x1.len(),
        });
    }
    let l0 = model.predict_label(x0)?;
    let l1 = model.predict_label(x1)?;
    if l0 == l1 {
        return Err(Error::InvalidBracket { label: l0 });
    }
    let (from, to) = if l1 == 1 { (x0, x1) } else { (x1, x0) };
    // `lo` unfavorable, `hi` favorable, parameters along from -> to.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = model.proba(&lerp(from, to, mid));
        if p >= 0.5 {
            hi = mid;
            if p - 0.5 <= tol {
                break;
            }
        } else {
            lo = mid;
        }
    }
    Ok(lerp(from, to, hi))
}

/// Index of the candidate with the smallest l1 distance to `x0`; the first
/// one wins ties.
pub fn select_boundary_index(x0: &[f64], candidates: &[Vec<f64>]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let d = l1_dist(c, x0);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
        .ok_or_else(|| Error::invalid("no boundary candidates"))
}

pub fn select_boundary(x0: &[f64], candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(candidates[select_boundary_index(x0, candidates)?].clone())
}

/// `n` points uniform in the l2 ball: a normalised Gaussian direction scaled
/// by `r * U^(1/p)`.
pub fn sample_uniform_ball(center: &[f64], r: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_ball_with(center, r, n, &mut rng)
}

fn sample_ball_with<R: Rng>(center: &[f64], r: f64, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if center.is_empty() {
        return Err(Error::invalid("center must be non-empty"));
    }
    let p = center.len() as f64;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let dir: Vec<f64> = (0..center.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = l2_norm(&dir);
        if !(norm > 0.0) {
            continue;
        }
        let u: f64 = rng.random();
        let rho = r * u.powf(1.0 / p) / norm;
        out.push(center.iter().zip(&dir).map(|(c, d)| c + rho * d).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of nearest counterfactuals, capped at what is available.
    pub k: usize,
    /// Sampling radius around the boundary point.
    pub radius: f64,
    pub n_samples: usize,
    /// Bisection tolerance.
    pub tol: f64,
    /// Bisect only this many of the nearest counterfactuals. `None` bisects all.
    #[serde(default)]
    pub max_bisections: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            radius: 0.2,
            n_samples: 200,
            tol: 1e-4,
            max_bisections: None,
        }
    }
}

/// Synthetic neighbourhood of the boundary point, split by predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSampleSet {
    pub x0: Vec<f64>,
    pub x_b: Vec<f64>,
    pub samples0: Vec<Vec<f64>>,
    pub samples1: Vec<Vec<f64>>,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Radius actually used (doubled if the first draw was one-sided).
    pub radius: f64,
    pub seed: u64,
}

impl LocalSampleSet {
    /// Assembles a sample set from labelled samples, computing the class
    /// proportions.
    pub fn from_parts(
        x0: Vec<f64>,
        x_b: Vec<f64>,
        samples0: Vec<Vec<f64>>,
        samples1: Vec<Vec<f64>>,
        radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = (samples0.len() + samples1.len()) as f64;
        let ls = Self {
            gamma0: samples0.len() as f64 / n,
            gamma1: samples1.len() as f64 / n,
            x0,
            x_b,
            samples0,
            samples1,
            radius,
            seed,
        };
        ls.validate()?;
        Ok(ls)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Checks shapes and that both classes are present.
    pub fn validate(&self) -> Result<()> {
        let p = self.x0.len();
        if p == 0 {
            return Err(Error::invalid("empty input vector"));
        }
        for v in std::iter::once(&self.x_b).chain(&self.samples0).chain(&self.samples1) {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: v.len(),
                });
            }
        }
        if self.samples0.is_empty() || self.samples1.is_empty() {
            return Err(Error::DegenerateNeighborhood(format!(
                "class sizes {} / {}",
                self.samples0.len(),
                self.samples1.len()
            )));
        }
        Ok(())
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ls: Self = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        ls.validate()?;
        Ok(ls)
    }
}

/// Nearest boundary point to `x0`: bisect towards each nearest
/// counterfactual and keep the l1-closest result.
pub fn find_boundary_point(x0: &[f64], data: &Dataset, model: &MlpModel, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let cf = nearest_counterfactuals(x0, data, model, cfg.k)?;
    let m = cfg.max_bisections.unwrap_or(cf.points.len()).clamp(1, cf.points.len());
    let candidates: Vec<Vec<f64>> = par::map(&cf.points[..m], |x1| boundary_bisection(x0, x1, model, cfg.tol))
        .into_iter()
        .collect::<Result<_>>()?;
    select_boundary(x0, &candidates)
}

/// The full local sampling pipeline. If every sample falls in one class the
/// draw is repeated once at twice the radius before giving up.
pub fn build_local_sample_set(
    x0: &[f64],
    data: &Dataset,
    model: &MlpModel,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<LocalSampleSet> {
    let x_b = find_boundary_point(x0, data, model, cfg)?;
    sample_around(x0, x_b, model, cfg, seed)
}

/// Samples and labels the neighbourhood of a known boundary point.
pub fn sample_around(
    x0: &[f64],
    x_b: Vec<f64>,
    model: &MlpModel,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<LocalSampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut radius = cfg.radius;
    for attempt in 0..2 {
        let samples = sample_ball_with(&x_b, radius, cfg.n_samples, &mut rng)?;
        let (s1, s0): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| model.label(s) == 1);
        if !s0.is_empty() && !s1.is_empty() {
            return LocalSampleSet::from_parts(x0.to_vec(), x_b, s0, s1, radius, seed);
        }
        if attempt == 0 {
            radius *= 2.0;
        }
    }
    Err(Error::DegenerateNeighborhood(format!(
        "all samples fell in one class up to radius {radius}"
    )))
}

/// Largest l2 distance from `x_b` among the stored samples.
pub fn max_sample_distance(ls: &LocalSampleSet) -> f64 {
    ls.samples0
        .iter()
        .chain(&ls.samples1)
        .map(|s| l2_dist(s, &ls.x_b))
        .fold(0.0, f64::max)
}
