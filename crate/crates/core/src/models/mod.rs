//! Joint laws of the coefficient pair `(A, B)` of the recursion
//! `X_n = A_n X_{n-1} + B_n` with diagonal `A`.

mod config;

pub use config::{parse_config, read_config, Config, ConfigError, RawConfig, WalkConfig};

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{mask_of_signs, SignMask};
use crate::linalg::{cholesky, is_positive_definite, quad_form, Mat2, Vec2};
use crate::rng::Stream;
use crate::special::{gaussian_abs_moment, Jet2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("degenerate draw: |a_{coord}| = 0")]
    DegenerateModel { coord: usize },
    #[error("declared blocks violate within-block equality at coordinates {i} and {j}")]
    BlockViolation { i: usize, j: usize },
}

/// Law of the additive term `B` for the log-Gaussian family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BLaw {
    Constant(Vec2),
    Gaussian { mean: Vec2, cov: Mat2 },
}

/// User-supplied model. Implementors draw one `(a, b)` pair per call.
pub trait CustomModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut Stream, a: &mut [f64], b: &mut [f64]);
    /// Whether `A` and `B` are independent.
    fn independent_ab(&self) -> bool;
    /// `Phi(theta) = E|A_1|^theta_1 |A_2|^theta_2` with derivatives, if known.
    fn mgf_jet(&self, _theta: Vec2) -> Option<Jet2> {
        None
    }
    /// Whether `(log|A_1|, log|A_2|)` has an absolutely continuous component.
    fn absolutely_continuous(&self) -> Option<bool> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    LogGaussian {
        m: Vec2,
        c: Mat2,
        b_law: BLaw,
    },
    CccGarch {
        a: Vec2,
        b: Vec2,
        c: Vec2,
        eta: f64,
    },
    /// Diagonals of the lag matrices `A_l`.
    BekkDiag {
        lags: Vec<Vec2>,
        cov: Mat2,
    },
    /// Deterministic `A = diag(a)`, `B = b`.
    Constant {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Custom(Arc<dyn CustomModel>),
}

impl Family {
    pub fn name(&self) -> &str {
        match self {
            Family::LogGaussian { .. } => "LogGaussian",
            Family::CccGarch { .. } => "CccGarch",
            Family::BekkDiag { .. } => "BekkDiag",
            Family::Constant { .. } => "Constant",
            Family::Custom(m) => m.name(),
        }
    }
}

/// Partition of the coordinates into the two equivalence classes.
/// Indices are zero-based; coordinate 0 is in the first class, 1 in the second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Blocks {
    classes: [Vec<usize>; 2],
}

impl Blocks {
    pub fn pair() -> Self {
        Self {
            classes: [vec![0], vec![1]],
        }
    }

    pub fn new(first: Vec<usize>, second: Vec<usize>, dim: usize) -> Result<Self, ModelError> {
        let mut seen = vec![false; dim];
        for &i in first.iter().chain(&second) {
            if i >= dim {
                return Err(ModelError::Invalid(format!("block index {} out of range", i + 1)));
            }
            if seen[i] {
                return Err(ModelError::Invalid(format!(
                    "coordinate {} appears twice in blocks",
                    i + 1
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(ModelError::Invalid("blocks do not cover all coordinates".into()));
        }
        if !first.contains(&0) || !second.contains(&1) {
            return Err(ModelError::Invalid(
                "coordinate 1 must be in the first block and 2 in the second".into(),
            ));
        }
        let mut first = first;
        let mut second = second;
        first.sort_unstable();
        second.sort_unstable();
        Ok(Self {
            classes: [first, second],
        })
    }

    pub fn class(&self, j: usize) -> &[usize] {
        &self.classes[j]
    }

    pub fn block_of(&self, coord: usize) -> usize {
        if self.classes[0].contains(&coord) {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
struct Prepared {
    chol_a: Mat2,
    chol_b: Mat2,
    mix: f64,
}

/// A validated model specification.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    family: Family,
    dim: usize,
    blocks: Blocks,
    seed: Option<u64>,
    prepared: Prepared,
}

impl ModelSpec {
    pub fn new(family: Family) -> Result<Self, ModelError> {
        let dim = match &family {
            Family::Constant { a, .. } => a.len(),
            Family::Custom(m) => m.dim(),
            _ => 2,
        };
        let blocks = if dim == 2 {
            Blocks::pair()
        } else {
            return Err(ModelError::Invalid(format!("dimension {dim} requires declared blocks")));
        };
        Self::with_blocks(family, blocks)
    }

    pub fn with_blocks(family: Family, blocks: Blocks) -> Result<Self, ModelError> {
        let zero = [[0.0; 2]; 2];
        let mut prepared = Prepared {
            chol_a: zero,
            chol_b: zero,
            mix: 0.0,
        };
        let dim = match &family {
            Family::LogGaussian { m, c, b_law } => {
                check_finite(m, "m")?;
                if !is_positive_definite(c) {
                    return Err(ModelError::Invalid("C must be symmetric positive definite".into()));
                }
                prepared.chol_a = cholesky(c);
                if let BLaw::Gaussian { mean, cov } = b_law {
                    check_finite(mean, "B mean")?;
                    if !crate::linalg::is_symmetric(cov) || crate::linalg::sym_eigenvalues(cov)[0] < 0.0 {
                        return Err(ModelError::Invalid(
                            "Cov must be symmetric positive semi-definite".into(),
                        ));
                    }
                    prepared.chol_b = cholesky(cov);
                }
                2
            }
            Family::CccGarch { a, b, c, eta } => {
                for (v, name) in [(a, "a"), (b, "b"), (c, "c")] {
                    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return Err(ModelError::Invalid(format!("{name} must be strictly positive")));
                    }
                }
                if !(eta.abs() < 1.0) {
                    return Err(ModelError::Invalid("eta must lie in (-1, 1)".into()));
                }
                prepared.mix = (1.0 - eta * eta).sqrt();
                2
            }
            Family::BekkDiag { lags, cov } => {
                if lags.len() < 2 {
                    return Err(ModelError::Invalid("BekkDiag needs at least two lag matrices".into()));
                }
                let sigma = bekk_covariance(lags);
                if crate::linalg::det(&sigma) <= 1e-14 * (sigma[0][0] * sigma[1][1]).max(1e-300) {
                    return Err(ModelError::Invalid("lag matrix entries must have rank 2".into()));
                }
                if !is_positive_definite(cov) {
                    return Err(ModelError::Invalid("Cov must be symmetric positive definite".into()));
                }
                prepared.chol_b = cholesky(cov);
                2
            }
            Family::Constant { a, b } => {
                if a.len() != b.len() || a.len() < 2 {
                    return Err(ModelError::Invalid("A and B must have equal length >= 2".into()));
                }
                if let Some(i) = a.iter().position(|x| *x == 0.0) {
                    return Err(ModelError::DegenerateModel { coord: i });
                }
                a.len()
            }
            Family::Custom(m) => m.dim(),
        };
        if dim < 2 {
            return Err(ModelError::Invalid("dimension must be at least 2".into()));
        }
        let covered: usize = blocks.classes.iter().map(Vec::len).sum();
        if covered != dim {
            return Err(ModelError::Invalid(format!(
                "blocks cover {covered} coordinates, model has {dim}"
            )));
        }
        if !matches!(family, Family::Constant { .. } | Family::Custom(_)) && dim != 2 {
            return Err(ModelError::Invalid("built-in families are two-dimensional".into()));
        }
        Ok(Self {
            family,
            dim,
            blocks,
            seed: None,
            prepared,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Whether `A` and `B` are independent.
    pub fn independent_ab(&self) -> bool {
        match &self.family {
            Family::Custom(m) => m.independent_ab(),
            _ => true,
        }
    }

    /// Whether every draw is the same.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.family, Family::Constant { .. })
    }

    /// Whether the law of `(log|A_1|, log|A_2|)` has an absolutely continuous part.
    pub fn absolutely_continuous_log_a(&self) -> Option<bool> {
        match &self.family {
            Family::LogGaussian { .. } | Family::BekkDiag { .. } => Some(true),
            Family::CccGarch { eta, .. } => Some(eta.abs() < 1.0),
            Family::Constant { .. } => Some(false),
            Family::Custom(m) => m.absolutely_continuous(),
        }
    }

    /// Draws one `(a, b)` pair into the buffers (each of length `dim`).
    pub fn sample_into(&self, rng: &mut Stream, a: &mut [f64], b: &mut [f64]) {
        match &self.family {
            Family::LogGaussian { m, b_law, .. } => {
                let z = correlated_normal(rng, &self.prepared.chol_a);
                a[0] = (m[0] + z[0]).exp();
                a[1] = (m[1] + z[1]).exp();
                match b_law {
                    BLaw::Constant(v) => b[..2].copy_from_slice(v),
                    BLaw::Gaussian { mean, .. } => {
                        let w = correlated_normal(rng, &self.prepared.chol_b);
                        b[0] = mean[0] + w[0];
                        b[1] = mean[1] + w[1];
                    }
                }
            }
            Family::CccGarch {
                a: shift,
                b: lin,
                c: quad,
                eta,
            } => {
                let z1: f64 = StandardNormal.sample(rng);
                let zp: f64 = StandardNormal.sample(rng);
                let z2 = eta * z1 + self.prepared.mix * zp;
                a[0] = lin[0] + quad[0] * z1 * z1;
                a[1] = lin[1] + quad[1] * z2 * z2;
                b[..2].copy_from_slice(shift);
            }
            Family::BekkDiag { lags, .. } => {
                a[0] = 0.0;
                a[1] = 0.0;
                for lag in lags {
                    let m: f64 = StandardNormal.sample(rng);
                    a[0] += m * lag[0];
                    a[1] += m * lag[1];
                }
                let w = correlated_normal(rng, &self.prepared.chol_b);
                b[0] = w[0];
                b[1] = w[1];
            }
            Family::Constant { a: av, b: bv } => {
                a.copy_from_slice(av);
                b.copy_from_slice(bv);
            }
            Family::Custom(m) => m.sample(rng, a, b),
        }
    }

    /// Draws `|A_1|, |A_2|` and the sign mask of the full diagonal.
    pub fn sample_a(&self, rng: &mut Stream, a: &mut [f64], b: &mut [f64]) -> SignMask {
        self.sample_into(rng, a, b);
        mask_of_signs(a)
    }

    /// Stable content hash of the specification.
    pub fn fingerprint(&self) -> String {
        let desc = serde_json::json!({
            "family": self.family.name(),
            "params": self.params_json(),
            "dim": self.dim,
            "blocks": self.blocks,
        });
        let digest = Sha256::digest(desc.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Family parameters as JSON (for reports and fingerprints).
    pub fn params_json(&self) -> serde_json::Value {
        use serde_json::json;
        match &self.family {
            Family::LogGaussian { m, c, b_law } => json!({"m": m, "C": c, "B_law": b_law}),
            Family::CccGarch { a, b, c, eta } => json!({"a": a, "b": b, "c": c, "eta": eta}),
            Family::BekkDiag { lags, cov } => json!({"lags": lags, "Cov": cov}),
            Family::Constant { a, b } => json!({"A": a, "B": b}),
            Family::Custom(m) => json!({"name": m.name()}),
        }
    }
}

fn check_finite(v: &[f64], name: &str) -> Result<(), ModelError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::Invalid(format!("{name} must be finite")))
    }
}

fn correlated_normal(rng: &mut Stream, chol: &Mat2) -> Vec2 {
    let z0: f64 = StandardNormal.sample(rng);
    let z1: f64 = StandardNormal.sample(rng);
    [chol[0][0] * z0, chol[1][0] * z0 + chol[1][1] * z1]
}

/// Covariance of `(A_1, A_2)` for the diagonal BEKK family.
pub fn bekk_covariance(lags: &[Vec2]) -> Mat2 {
    let mut s = [[0.0; 2]; 2];
    for l in lags {
        s[0][0] += l[0] * l[0];
        s[0][1] += l[0] * l[1];
        s[1][1] += l[1] * l[1];
    }
    s[1][0] = s[0][1];
    s
}

/// One draw of `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbDraw {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Signs of the diagonal of `A` (`+1` or `-1`).
    pub k: Vec<i8>,
}

impl AbDraw {
    /// `U = (alpha_1 log|a_1|, alpha_2 log|a_2|)` from the block representatives.
    pub fn u(&self, alpha: Vec2) -> Vec2 {
        [alpha[0] * self.a[0].abs().ln(), alpha[1] * self.a[1].abs().ln()]
    }
}

/// Draws one `(A, B)` pair.
pub fn sample_ab(spec: &ModelSpec, stream: &mut Stream) -> Result<AbDraw, ModelError> {
    let d = spec.dim();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    spec.sample_into(stream, &mut a, &mut b);
    if let Some(coord) = a.iter().position(|x| *x == 0.0) {
        return Err(ModelError::DegenerateModel { coord });
    }
    let k = a.iter().map(|x| if *x < 0.0 { -1 } else { 1 }).collect();
    Ok(AbDraw { a, b, k })
}

/// `Phi(theta) = E|A_1|^theta_1 |A_2|^theta_2` with derivatives in `theta`,
/// for the families where it is available analytically.
pub fn mgf_jet(spec: &ModelSpec, theta: Vec2) -> Option<Jet2> {
    match spec.family() {
        Family::LogGaussian { m, c, .. } => {
            let g = [
                m[0] + c[0][0] * theta[0] + c[0][1] * theta[1],
                m[1] + c[1][0] * theta[0] + c[1][1] * theta[1],
            ];
            let v = (m[0] * theta[0] + m[1] * theta[1] + 0.5 * quad_form(c, theta)).exp();
            Some(Jet2 {
                value: v,
                grad: [v * g[0], v * g[1]],
                hess: [
                    [v * (g[0] * g[0] + c[0][0]), v * (g[0] * g[1] + c[0][1])],
                    [v * (g[1] * g[0] + c[1][0]), v * (g[1] * g[1] + c[1][1])],
                ],
            })
        }
        Family::BekkDiag { lags, .. } => {
            if theta[0] <= -1.0 || theta[1] <= -1.0 {
                return None;
            }
            let s = bekk_covariance(lags);
            let (s1, s2) = (s[0][0].sqrt(), s[1][1].sqrt());
            let r = s[0][1] / (s1 * s2);
            let j = gaussian_abs_moment(theta[0], theta[1], r);
            let scale = s1.powf(theta[0]) * s2.powf(theta[1]);
            let (l1, l2) = (s1.ln(), s2.ln());
            // Phi = scale * G, d scale / d theta_i = scale * l_i
            let g = j.value;
            let gp = [j.grad[0] + l1 * g, j.grad[1] + l2 * g];
            Some(Jet2 {
                value: scale * g,
                grad: [scale * gp[0], scale * gp[1]],
                hess: [
                    [
                        scale * (j.hess[0][0] + 2.0 * l1 * j.grad[0] + l1 * l1 * g),
                        scale * (j.hess[0][1] + l1 * j.grad[1] + l2 * j.grad[0] + l1 * l2 * g),
                    ],
                    [
                        scale * (j.hess[1][0] + l1 * j.grad[1] + l2 * j.grad[0] + l1 * l2 * g),
                        scale * (j.hess[1][1] + 2.0 * l2 * j.grad[1] + l2 * l2 * g),
                    ],
                ],
            })
        }
        Family::Constant { a, .. } => {
            let l = [a[0].abs().ln(), a[1].abs().ln()];
            let v = (theta[0] * l[0] + theta[1] * l[1]).exp();
            Some(Jet2 {
                value: v,
                grad: [v * l[0], v * l[1]],
                hess: [[v * l[0] * l[0], v * l[0] * l[1]], [v * l[1] * l[0], v * l[1] * l[1]]],
            })
        }
        Family::Custom(m) => m.mgf_jet(theta),
        Family::CccGarch { .. } => None,
    }
}

/// `log Phi(theta)` when a closed form exists.
pub fn closed_form_log_mgf(spec: &ModelSpec, theta: Vec2) -> Option<f64> {
    match spec.family() {
        Family::LogGaussian { m, c, .. } => Some(m[0] * theta[0] + m[1] * theta[1] + 0.5 * quad_form(c, theta)),
        _ => mgf_jet(spec, theta).map(|j| j.value.ln()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Lane, StreamFactory};

    pub(crate) fn log_gaussian(eta: f64) -> ModelSpec {
        ModelSpec::new(Family::LogGaussian {
            m: [-0.5, -0.5],
            c: [[1.0, eta], [eta, 1.0]],
            b_law: BLaw::Gaussian {
                mean: [0.0, 0.0],
                cov: [[1.0, 0.0], [0.0, 1.0]],
            },
        })
        .unwrap()
    }

    #[test]
    fn log_mgf_examples() {
        let spec = log_gaussian(0.5);
        assert_eq!(closed_form_log_mgf(&spec, [1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(closed_form_log_mgf(&spec, [0.0, 0.0]).unwrap(), 0.0);
        assert!(closed_form_log_mgf(&spec, [2.0 / 3.0, 2.0 / 3.0]).unwrap().abs() < 1e-15);
        let ccc = ModelSpec::new(Family::CccGarch {
            a: [1.0; 2],
            b: [0.5; 2],
            c: [0.5; 2],
            eta: 0.5,
        })
        .unwrap();
        assert!(closed_form_log_mgf(&ccc, [1.0, 0.0]).is_none());
    }

    #[test]
    fn log_gaussian_means() {
        let spec = log_gaussian(0.5);
        let mut rng = StreamFactory::new(1).stream(Lane::Draws, 0);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = sample_ab(&spec, &mut rng).unwrap();
            s1 += d.a[0].ln();
            s2 += d.a[1].ln();
        }
        let se = 1.0 / (n as f64).sqrt();
        assert!((s1 / n as f64 + 0.5).abs() < 3.0 * se);
        assert!((s2 / n as f64 + 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn ccc_garch_draws() {
        let spec = ModelSpec::new(Family::CccGarch {
            a: [1.0, 2.0],
            b: [0.5; 2],
            c: [0.5; 2],
            eta: 0.5,
        })
        .unwrap();
        let mut rng = StreamFactory::new(2).stream(Lane::Draws, 0);
        let n = 1_000_000;
        let mut acc = [
            crate::stats::Accumulator::default(),
            crate::stats::Accumulator::default(),
        ];
        for _ in 0..n {
            let d = sample_ab(&spec, &mut rng).unwrap();
            assert!(d.a[0] >= 0.5 && d.a[1] >= 0.5);
            assert_eq!(d.b, vec![1.0, 2.0]);
            acc[0].push(d.a[0]);
            acc[1].push(d.a[1]);
        }
        for a in &acc {
            let e = a.estimate();
            assert!((e.value - 1.0).abs() < 3.0 * e.stderr, "{e:?}");
        }
    }

    #[test]
    fn bekk_sample_covariance_nonsingular() {
        let lags = vec![[0.6, 0.2], [0.3, 0.7]];
        let spec = ModelSpec::new(Family::BekkDiag {
            lags: lags.clone(),
            cov: [[1.0, 0.0], [0.0, 1.0]],
        })
        .unwrap();
        let exact = bekk_covariance(&lags);
        let mut rng = StreamFactory::new(3).stream(Lane::Draws, 0);
        let n = 1_000_000;
        let mut s = [[0.0; 2]; 2];
        for _ in 0..n {
            let d = sample_ab(&spec, &mut rng).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += d.a[i] * d.a[j] / n as f64;
                }
            }
        }
        assert!(crate::linalg::det(&s) > 0.5 * crate::linalg::det(&exact));
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[i][j] - exact[i][j]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn bekk_rank_one_rejected() {
        let r = ModelSpec::new(Family::BekkDiag {
            lags: vec![[0.5, 0.25], [0.2, 0.1]],
            cov: [[1.0, 0.0], [0.0, 1.0]],
        });
        assert!(matches!(r, Err(ModelError::Invalid(_))));
    }

    #[test]
    fn invalid_specs() {
        assert!(ModelSpec::new(Family::LogGaussian {
            m: [-0.5, -0.5],
            c: [[1.0, 1.0], [1.0, 1.0]],
            b_law: BLaw::Constant([1.0, 1.0]),
        })
        .is_err());
        assert!(ModelSpec::new(Family::CccGarch {
            a: [1.0, 0.0],
            b: [0.5; 2],
            c: [0.5; 2],
            eta: 0.5
        })
        .is_err());
        assert!(ModelSpec::new(Family::CccGarch {
            a: [1.0; 2],
            b: [0.5; 2],
            c: [0.5; 2],
            eta: 1.0
        })
        .is_err());
        assert_eq!(
            ModelSpec::new(Family::Constant {
                a: vec![0.5, 0.0],
                b: vec![1.0, 1.0]
            })
            .unwrap_err(),
            ModelError::DegenerateModel { coord: 1 }
        );
        assert!(Blocks::new(vec![1], vec![0], 2).is_err());
        assert!(Blocks::new(vec![0, 2], vec![1], 4).is_err());
        assert!(Blocks::new(vec![0, 2], vec![1, 2], 3).is_err());
        assert!(Blocks::new(vec![0, 2], vec![1, 3], 4).is_ok());
    }

    #[test]
    fn seed_determinism() {
        let spec = log_gaussian(0.3);
        let f = StreamFactory::new(99);
        let mut r1 = f.stream(Lane::Draws, 5);
        let mut r2 = f.stream(Lane::Draws, 5);
        for _ in 0..100 {
            let a = sample_ab(&spec, &mut r1).unwrap();
            let b = sample_ab(&spec, &mut r2).unwrap();
            assert_eq!(
                a.a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.a.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(
                a.b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn bekk_jet_matches_monte_carlo() {
        let lags = vec![[0.6, 0.2], [0.3, 0.7]];
        let spec = ModelSpec::new(Family::BekkDiag {
            lags,
            cov: [[1.0, 0.0], [0.0, 1.0]],
        })
        .unwrap();
        let theta = [1.2, 0.8];
        let j = mgf_jet(&spec, theta).unwrap();
        let mut rng = StreamFactory::new(4).stream(Lane::Draws, 0);
        let mut acc = crate::stats::Accumulator::default();
        for _ in 0..1_000_000 {
            let d = sample_ab(&spec, &mut rng).unwrap();
            acc.push(d.a[0].abs().powf(theta[0]) * d.a[1].abs().powf(theta[1]));
        }
        let e = acc.estimate();
        assert!((e.value - j.value).abs() < 4.0 * e.stderr, "{e:?} vs {}", j.value);
    }
}
