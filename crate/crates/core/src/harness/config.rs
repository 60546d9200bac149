//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::data::Schema;
use crate::recourse::{Method, RecourseConfig, WachterParams};
use crate::sampler::SamplerConfig;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub master_seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub future: FutureConfig,
    /// Test instances to explain; the first ones the current model rejects.
    #[serde(default = "default_instances")]
    pub instances: usize,
    pub methods: Vec<MethodSpec>,
}

fn default_instances() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Present data noise-free, future data with label noise.
    Synthetic {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_future_noise")]
        future_noise_std: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    /// Two CSV files in one schema: the current data and the shifted data.
    Csv {
        schema: Schema,
        current: PathBuf,
        future: PathBuf,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_n() -> usize {
    1000
}

fn default_future_noise() -> f64 {
    1.0
}

fn default_train_fraction() -> f64 {
    0.8
}

/// Training hyperparameters; seeds come from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            l2_penalty: d.l2_penalty,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            l2_penalty: self.l2_penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FutureConfig {
    pub models: usize,
    /// Fraction of the shifted data added to each retraining set.
    pub fraction: f64,
}

impl Default for FutureConfig {
    fn default() -> Self {
        Self {
            models: 20,
            fraction: 0.2,
        }
    }
}

/// One method and its parameter grid.
///
/// Without `points` the grid is the product `eps0 x eps1 x delta_plus`
/// (each defaulting to `[0]`). For `wachter` the swept value is `lambda0`,
/// reported in the `delta_plus` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub eps0: Vec<f64>,
    #[serde(default)]
    pub eps1: Vec<f64>,
    #[serde(default)]
    pub delta_plus: Vec<f64>,
    /// Explicit `[eps0, eps1, delta_plus]` triples, replacing the product.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    #[serde(default)]
    pub lambda0: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub wachter: WachterParams,
}

fn default_sigma() -> f64 {
    1.0
}

/// A configuration point: `(eps0, eps1, delta_plus)`, or `(0, 0, lambda0)`
/// for Wachter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eps0: f64,
    pub eps1: f64,
    pub delta_plus: f64,
}

fn or_zero(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        vec![0.0]
    } else {
        v.to_vec()
    }
}

impl MethodSpec {
    pub fn grid(&self) -> Vec<GridPoint> {
        if self.method == Method::Wachter {
            let lambdas = if self.lambda0.is_empty() {
                vec![self.wachter.lambda0]
            } else {
                self.lambda0.clone()
            };
            return lambdas
                .into_iter()
                .map(|l| GridPoint {
                    eps0: 0.0,
                    eps1: 0.0,
                    delta_plus: l,
                })
                .collect();
        }
        if !self.points.is_empty() {
            return self
                .points
                .iter()
                .map(|&[eps0, eps1, delta_plus]| GridPoint { eps0, eps1, delta_plus })
                .collect();
        }
        let (e0, e1) = if self.method == Method::Kde {
            (vec![0.0], vec![0.0])
        } else {
            (or_zero(&self.eps0), or_zero(&self.eps1))
        };
        let mut out = Vec::new();
        for &eps0 in &e0 {
            for &eps1 in &e1 {
                for &delta_plus in &or_zero(&self.delta_plus) {
                    out.push(GridPoint { eps0, eps1, delta_plus });
                }
            }
        }
        out
    }

    pub fn recourse_config(&self, point: &GridPoint, frozen_mask: Vec<bool>) -> RecourseConfig {
        RecourseConfig {
            delta_plus: point.delta_plus,
            eps0: point.eps0,
            eps1: point.eps1,
            sigma: self.sigma,
            frozen_mask,
            ..RecourseConfig::default()
        }
    }

    pub fn wachter_params(&self, point: &GridPoint) -> WachterParams {
        WachterParams {
            lambda0: point.delta_plus,
            ..self.wachter
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetConfig::Csv { current, future, .. } = &mut cfg.dataset {
            for p in [current, future] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("`methods` must list at least one method".into()));
        }
        for m in &self.methods {
            let grid = m.grid();
            if grid.is_empty() {
                return Err(Error::Config(format!("empty grid for method {}", m.method.as_str())));
            }
            for g in &grid {
                if m.method == Method::Wachter {
                    if !(g.delta_plus > 0.0) {
                        return Err(Error::Config("wachter lambda0 must be positive".into()));
                    }
                } else {
                    m.recourse_config(g, Vec::new())
                        .validate()
                        .map_err(|e| Error::Config(e.to_string()))?;
                }
            }
        }
        if self.future.models == 0 || !(self.future.fraction > 0.0 && self.future.fraction <= 1.0) {
            return Err(Error::Config(
                "future.models must be positive and future.fraction in (0,1]".into(),
            ));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be positive".into()));
        }
        self.train
            .with_seed(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn check_paths(&self) -> Result<()> {
        if let DatasetConfig::Csv { current, future, .. } = &self.dataset {
            for p in [current, future] {
                if !p.exists() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Stable 64-bit FNV-1a of a purpose tag.
fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for `(purpose tag, index)`:
/// `splitmix64(splitmix64(master ^ fnv1a(tag)) ^ index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(tag)) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
master_seed = 3
[dataset]
kind = "synthetic"
n = 200
[[methods]]
method = "robust"
eps0 = [0.0, 0.5]
eps1 = [1.0]
delta_plus = [0.0, 0.2, 0.4]
"#;

    #[test]
    fn parses_and_builds_grid() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.methods[0].grid().len(), 6);
        assert_eq!(cfg.future.models, 20);
        assert_eq!(cfg.sampler.k, 1000);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("master_seed = 3", "master_seed = 3\nbogus_key = 1");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let text = MINIMAL.replace("n = 200", "n = 200\nnoise = 2");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("noise"), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let text = MINIMAL.replace("version = 1", "version = 9");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(1, "future", 0);
        assert_eq!(a, derive_seed(1, "future", 0));
        assert_ne!(a, derive_seed(1, "future", 1));
        assert_ne!(a, derive_seed(1, "sample", 0));
        assert_ne!(a, derive_seed(2, "future", 0));
    }
}
