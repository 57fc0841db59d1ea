//! TOML model configuration.
//!
//! ```toml
//! family = "LogGaussian"       # LogGaussian | CccGarch | BekkDiag | Constant | GaussianWalk
//! m = [-0.5, -0.5]
//! C = [[1.0, 0.5], [0.5, 1.0]]
//! seed = 42
//! ```
//!
//! Keys per family (anything else is rejected):
//!
//! | family       | required            | optional                         |
//! |--------------|---------------------|----------------------------------|
//! | LogGaussian  | `m`, `C`            | `B` (mean of B), `Cov` (of B)    |
//! | CccGarch     | `a`, `b`, `c`, `eta`|                                  |
//! | BekkDiag     | `lags`              | `Cov` (default identity)         |
//! | Constant     | `A`, `B`            | `blocks`                         |
//! | GaussianWalk | `m`, `Cov`          | `flip` (per-coordinate sign flip probability) |
//!
//! `seed` is accepted everywhere. `blocks` lists the two coordinate classes
//! with one-based indices, e.g. `blocks = [[1, 3], [2]]`.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{BLaw, Blocks, Family, ModelError, ModelSpec};
use crate::linalg::{Mat2, Vec2};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("family {family} requires key '{key}'")]
    MissingKey { family: &'static str, key: &'static str },
    #[error("key '{key}' is not used by family {family}")]
    UnexpectedKey { family: &'static str, key: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The raw key-value tree, before validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub family: String,
    pub m: Option<Vec2>,
    #[serde(rename = "C")]
    pub big_c: Option<Mat2>,
    pub a: Option<Vec2>,
    pub b: Option<Vec2>,
    pub c: Option<Vec2>,
    pub eta: Option<f64>,
    pub lags: Option<Vec<Mat2>>,
    #[serde(rename = "Cov")]
    pub cov: Option<Mat2>,
    pub blocks: Option<Vec<Vec<usize>>>,
    pub seed: Option<u64>,
    #[serde(rename = "A")]
    pub big_a: Option<Vec<f64>>,
    #[serde(rename = "B")]
    pub big_b: Option<Vec<f64>>,
    pub flip: Option<Vec2>,
}

/// Increment law of a plain Gaussian walk with random sign flips.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub mean: Vec2,
    pub cov: Mat2,
    pub flip: Vec2,
}

#[derive(Debug, Clone)]
pub enum Config {
    Model(ModelSpec),
    Walk { walk: WalkConfig, seed: Option<u64> },
}

impl Config {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Config::Model(s) => s.seed(),
            Config::Walk { seed, .. } => *seed,
        }
    }
}

pub fn read_config(path: &Path) -> Result<Config, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    raw.build()
}

impl RawConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut add = |cond: bool, k| {
            if cond {
                keys.push(k)
            }
        };
        add(self.m.is_some(), "m");
        add(self.big_c.is_some(), "C");
        add(self.a.is_some(), "a");
        add(self.b.is_some(), "b");
        add(self.c.is_some(), "c");
        add(self.eta.is_some(), "eta");
        add(self.lags.is_some(), "lags");
        add(self.cov.is_some(), "Cov");
        add(self.blocks.is_some(), "blocks");
        add(self.big_a.is_some(), "A");
        add(self.big_b.is_some(), "B");
        add(self.flip.is_some(), "flip");
        keys
    }

    fn only(&self, family: &'static str, allowed: &[&'static str]) -> Result<(), ConfigError> {
        match self.present().into_iter().find(|k| !allowed.contains(k)) {
            Some(key) => Err(ConfigError::UnexpectedKey { family, key }),
            None => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Config, ConfigError> {
        fn need<T: Clone>(v: &Option<T>, family: &'static str, key: &'static str) -> Result<T, ConfigError> {
            v.clone().ok_or(ConfigError::MissingKey { family, key })
        }
        let identity = [[1.0, 0.0], [0.0, 1.0]];
        let family = match self.family.as_str() {
            "LogGaussian" | "log_gaussian" => {
                const F: &str = "LogGaussian";
                self.only(F, &["m", "C", "B", "Cov"])?;
                let mean = match &self.big_b {
                    Some(v) if v.len() == 2 => [v[0], v[1]],
                    Some(_) => return Err(ConfigError::Parse("B must have two entries".into())),
                    None => [0.0, 0.0],
                };
                let cov = self.cov.unwrap_or(identity);
                let b_law = if cov.iter().flatten().all(|x| *x == 0.0) {
                    BLaw::Constant(mean)
                } else {
                    BLaw::Gaussian { mean, cov }
                };
                Family::LogGaussian {
                    m: need(&self.m, F, "m")?,
                    c: need(&self.big_c, F, "C")?,
                    b_law,
                }
            }
            "CccGarch" | "ccc_garch" => {
                const F: &str = "CccGarch";
                self.only(F, &["a", "b", "c", "eta"])?;
                Family::CccGarch {
                    a: need(&self.a, F, "a")?,
                    b: need(&self.b, F, "b")?,
                    c: need(&self.c, F, "c")?,
                    eta: need(&self.eta, F, "eta")?,
                }
            }
            "BekkDiag" | "bekk_diag" => {
                const F: &str = "BekkDiag";
                self.only(F, &["lags", "Cov"])?;
                let lags = need(&self.lags, F, "lags")?;
                let mut diag = Vec::with_capacity(lags.len());
                for l in &lags {
                    if l[0][1] != 0.0 || l[1][0] != 0.0 {
                        return Err(ModelError::Invalid("lag matrices must be diagonal".into()).into());
                    }
                    diag.push([l[0][0], l[1][1]]);
                }
                Family::BekkDiag {
                    lags: diag,
                    cov: self.cov.unwrap_or(identity),
                }
            }
            "Constant" | "constant" => {
                const F: &str = "Constant";
                self.only(F, &["A", "B", "blocks"])?;
                Family::Constant {
                    a: need(&self.big_a, F, "A")?,
                    b: need(&self.big_b, F, "B")?,
                }
            }
            "GaussianWalk" | "gaussian_walk" => {
                const F: &str = "GaussianWalk";
                self.only(F, &["m", "Cov", "flip"])?;
                let walk = WalkConfig {
                    mean: need(&self.m, F, "m")?,
                    cov: need(&self.cov, F, "Cov")?,
                    flip: self.flip.unwrap_or([0.0, 0.0]),
                };
                if walk.flip.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(ConfigError::Parse("flip probabilities must lie in [0, 1]".into()));
                }
                if !crate::linalg::is_positive_definite(&walk.cov) {
                    return Err(ModelError::Invalid("Cov must be symmetric positive definite".into()).into());
                }
                return Ok(Config::Walk { walk, seed: self.seed });
            }
            other => return Err(ConfigError::UnknownFamily(other.to_string())),
        };
        let spec = match &self.blocks {
            Some(classes) => {
                if classes.len() != 2 || classes.iter().any(|c| c.is_empty() || c.contains(&0)) {
                    return Err(ConfigError::Parse(
                        "blocks must be two nonempty lists of one-based indices".into(),
                    ));
                }
                let dim = classes[0].len() + classes[1].len();
                let zero = |c: &Vec<usize>| c.iter().map(|i| i - 1).collect::<Vec<_>>();
                let blocks = Blocks::new(zero(&classes[0]), zero(&classes[1]), dim)?;
                ModelSpec::with_blocks(family, blocks)?
            }
            None => ModelSpec::new(family)?,
        };
        Ok(Config::Model(match self.seed {
            Some(s) => spec.with_seed(s),
            None => spec,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_family() {
        let c =
            parse_config("family = \"LogGaussian\"\nm = [-0.5, -0.5]\nC = [[1.0, 0.5], [0.5, 1.0]]\nseed = 7").unwrap();
        assert_eq!(c.seed(), Some(7));
        assert!(matches!(c, Config::Model(ref s) if s.family().name() == "LogGaussian"));
        let c = parse_config("family = \"CccGarch\"\na = [1, 1]\nb = [0.5, 0.5]\nc = [0.5, 0.5]\neta = 0.5").unwrap();
        assert!(matches!(c, Config::Model(_)));
        let c = parse_config("family = \"BekkDiag\"\nlags = [[[0.6, 0], [0, 0.2]], [[0.3, 0], [0, 0.7]]]").unwrap();
        assert!(matches!(c, Config::Model(_)));
        let c =
            parse_config("family = \"Constant\"\nA = [0.5, 0.5, 0.5]\nB = [1, 2, 3]\nblocks = [[1, 3], [2]]").unwrap();
        match c {
            Config::Model(s) => {
                assert_eq!(s.dim(), 3);
                assert_eq!(s.blocks().class(0), &[0, 2]);
            }
            _ => panic!(),
        }
        let c = parse_config("family = \"GaussianWalk\"\nm = [1, 1]\nCov = [[1, 0], [0, 1]]\nflip = [0.5, 0]").unwrap();
        assert!(matches!(c, Config::Walk { .. }));
    }

    #[test]
    fn rejects_unknown_and_foreign_keys() {
        assert!(matches!(
            parse_config("family = \"LogGaussian\"\nm = [0, 0]\nC = [[1, 0], [0, 1]]\nfoo = 1"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            parse_config("family = \"LogGaussian\"\nm = [0, 0]\nC = [[1, 0], [0, 1]]\neta = 0.5"),
            Err(ConfigError::UnexpectedKey { key: "eta", .. })
        ));
        assert!(matches!(
            parse_config("family = \"Nope\""),
            Err(ConfigError::UnknownFamily(_))
        ));
        assert!(matches!(
            parse_config("family = \"CccGarch\"\na = [1, 1]"),
            Err(ConfigError::MissingKey { .. })
        ));
        assert!(matches!(
            parse_config("family = \"LogGaussian\"\nm = [0, 0]\nC = [[1, 2], [2, 1]]"),
            Err(ConfigError::Model(_))
        ));
    }
}
