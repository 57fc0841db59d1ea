//! Monte Carlo engines: the stationary law of `X = AX + B` by forward
//! iteration and by the truncated perpetuity series, the Esscher-tilted
//! walk `S_n`, and importance-sampled probabilities of the walk.

mod io;
mod tilt;

pub use io::{read_cache, write_cache, write_csv};
pub use tilt::{
    joint_exceedance_prob, tilted_mean, tilted_walk, walk_box_prob, walk_box_prob_shifted, EsscherTilt,
    ExceedanceEstimate, GaussLeading, IsConfig, TiltedDraws, WalkBoxEstimate, WalkPath,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{mask_of_signs, SignGroup};
use crate::linalg::Vec2;
use crate::mgf::{MgfError, TailIndices};
use crate::models::{Blocks, ModelError, ModelSpec};
use crate::rng::{chunk_sizes, map_chunks, Lane, StreamFactory};
use crate::stats::{ks_distance, Accumulator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("E log|A_{}| = {drift:.4} +- {stderr:.4} is not negative at 3 sigma", coord + 1)]
    NonContracting { coord: usize, drift: f64, stderr: f64 },
    #[error("rejection sampler acceptance rate {acceptance:.2e} is below 1e-4")]
    RejectionStall { acceptance: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mgf(#[from] MgfError),
}

/// Samples recorded per independent chain.
pub const CHAIN_LENGTH: usize = 65_536;
/// Draws used by the contraction pre-check when the burn-in is shorter.
const MIN_DRIFT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub thinning: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            n_samples: 100_000,
            seed: 0,
            thinning: 1,
        }
    }
}

impl SimulationConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    /// `"stationary"` or `"perpetuity"`.
    pub source: String,
    pub fingerprint: String,
    pub config: SimulationConfig,
}

/// Draws of `X` with block norms; polar coordinates are derived on demand.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    dim: usize,
    xs: Vec<f64>,
    norms: Vec<Vec2>,
    alphas: Vec<f64>,
    blocks: Blocks,
    pub meta: BatchMeta,
}

/// `||x||_alpha = max_i |x_i|^{alpha_i}`.
pub fn alpha_norm(x: &[f64], alphas: &[f64]) -> f64 {
    x.iter().zip(alphas).fold(0.0, |m, (v, a)| m.max(v.abs().powf(*a)))
}

/// `(s, omega)` with `x = s^{1/alpha} omega` and `||omega||_alpha = 1`.
/// The origin maps to `(0, 0)`.
pub fn polar(x: &[f64], alphas: &[f64]) -> (f64, Vec<f64>) {
    let s = alpha_norm(x, alphas);
    (s, omega_of(x, alphas, s))
}

fn omega_of(x: &[f64], alphas: &[f64], s: f64) -> Vec<f64> {
    if s == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().zip(alphas).map(|(v, a)| v * s.powf(-1.0 / a)).collect()
}

/// Inverse of [`polar`].
pub fn from_polar(s: f64, omega: &[f64], alphas: &[f64]) -> Vec<f64> {
    omega.iter().zip(alphas).map(|(w, a)| s.powf(1.0 / a) * w).collect()
}

impl SampleBatch {
    /// Wraps row-major draws (`xs.len()` must be a multiple of the dimension).
    pub fn from_rows(xs: Vec<f64>, alphas: Vec<f64>, blocks: Blocks, meta: BatchMeta) -> Self {
        let dim = alphas.len();
        assert!(dim > 0 && xs.len() % dim == 0, "row length mismatch");
        let norms = xs.chunks(dim).map(|x| block_norms_of(x, &alphas, &blocks)).collect();
        Self {
            dim,
            xs,
            norms,
            alphas,
            blocks,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.xs.chunks_exact(self.dim)
    }

    /// `(||x^(1)||_alpha, ||x^(2)||_alpha)` per row.
    pub fn block_norms(&self) -> &[Vec2] {
        &self.norms
    }

    /// Radial part `s = ||x||_alpha` of row `i`.
    pub fn radius(&self, i: usize) -> f64 {
        let n = self.norms[i];
        n[0].max(n[1])
    }

    pub fn polar(&self, i: usize) -> (f64, Vec<f64>) {
        let s = self.radius(i);
        (s, omega_of(self.row(i), &self.alphas, s))
    }

    /// Coordinate `j` of every row.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.xs.iter().skip(j).step_by(self.dim).copied()
    }

    /// A batch with every row replaced by `f(row)`.
    pub fn map_rows(&self, mut f: impl FnMut(&mut [f64])) -> SampleBatch {
        let mut xs = self.xs.clone();
        xs.chunks_mut(self.dim).for_each(&mut f);
        SampleBatch::from_rows(xs, self.alphas.clone(), self.blocks.clone(), self.meta.clone())
    }
}

fn block_norms_of(x: &[f64], alphas: &[f64], blocks: &Blocks) -> Vec2 {
    let mut out = [0.0f64; 2];
    for (j, o) in out.iter_mut().enumerate() {
        for &i in blocks.class(j) {
            *o = o.max(x[i].abs().powf(alphas[i]));
        }
    }
    out
}

/// Refuses models whose `E log|A_i|` is not negative at 3 standard errors,
/// judged from `max(burn_in, 10^4)` draws.
pub fn check_contraction(spec: &ModelSpec, cfg: &SimulationConfig) -> Result<(), McError> {
    let d = spec.dim();
    let n = cfg.burn_in.max(MIN_DRIFT_DRAWS);
    let mut rng = StreamFactory::new(cfg.seed).stream(Lane::Pilot, 1 << 40);
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let mut acc = vec![Accumulator::default(); d];
    for _ in 0..n {
        spec.sample_into(&mut rng, &mut a, &mut b);
        for (x, s) in a.iter().zip(acc.iter_mut()) {
            s.push(x.abs().ln());
        }
    }
    for (coord, s) in acc.iter().enumerate() {
        let e = s.estimate();
        if !(e.value + 3.0 * e.stderr < 0.0) {
            return Err(McError::NonContracting {
                coord,
                drift: e.value,
                stderr: e.stderr,
            });
        }
    }
    Ok(())
}

fn meta(spec: &ModelSpec, source: &str, cfg: &SimulationConfig) -> BatchMeta {
    BatchMeta {
        source: source.into(),
        fingerprint: spec.fingerprint(),
        config: *cfg,
    }
}

fn validate(cfg: &SimulationConfig) -> Result<(), McError> {
    if cfg.thinning == 0 {
        return Err(McError::InvalidConfig("thinning must be at least 1".into()));
    }
    Ok(())
}

/// Iterates `X_n = A_n X_{n-1} + B_n` from `X_0 = 0`.
///
/// The samples are split into chains of [`CHAIN_LENGTH`]; each chain has
/// its own stream and burn-in, so the output does not depend on the number
/// of worker threads.
pub fn simulate_stationary(
    spec: &ModelSpec,
    alpha: &TailIndices,
    cfg: &SimulationConfig,
) -> Result<SampleBatch, McError> {
    validate(cfg)?;
    check_contraction(spec, cfg)?;
    let d = spec.dim();
    let f = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.n_samples, CHAIN_LENGTH);
    let xs = map_chunks(sizes.len(), |c| {
        let mut rng = f.stream(Lane::Stationary, c as u64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut x = vec![0.0; d];
        let mut step = |x: &mut [f64]| {
            spec.sample_into(&mut rng, &mut a, &mut b);
            for i in 0..d {
                x[i] = a[i] * x[i] + b[i];
            }
        };
        for _ in 0..cfg.burn_in {
            step(&mut x);
        }
        let mut out = Vec::with_capacity(sizes[c] * d);
        for _ in 0..sizes[c] {
            for _ in 0..cfg.thinning {
                step(&mut x);
            }
            out.extend_from_slice(&x);
        }
        out
    })
    .concat();
    Ok(SampleBatch::from_rows(
        xs,
        alpha.coordinates.clone(),
        spec.blocks().clone(),
        meta(spec, "stationary", cfg),
    ))
}

/// Independent draws of the series `sum_{k <= n} A_1...A_{k-1} B_k`.
#[derive(Debug, Clone)]
pub struct PerpetuityBatch {
    pub batch: SampleBatch,
    /// Per coordinate: mean over draws of `|A_1...A_n| E|B| / (1 - e^{E log|A|})`,
    /// the geometric bound on the omitted tail of the series.
    pub remainder: Vec<f64>,
}

pub fn perpetuity_truncated(
    spec: &ModelSpec,
    alpha: &TailIndices,
    n_terms: usize,
    cfg: &SimulationConfig,
) -> Result<PerpetuityBatch, McError> {
    validate(cfg)?;
    if n_terms == 0 {
        return Err(McError::InvalidConfig("n_terms must be at least 1".into()));
    }
    check_contraction(spec, cfg)?;
    let d = spec.dim();
    let f = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.n_samples, CHAIN_LENGTH);
    struct Part {
        xs: Vec<f64>,
        prod: Vec<Accumulator>,
        log_a: Vec<Accumulator>,
        abs_b: Vec<Accumulator>,
    }
    let parts = map_chunks(sizes.len(), |c| {
        let mut rng = f.stream(Lane::Perpetuity, c as u64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut part = Part {
            xs: Vec::with_capacity(sizes[c] * d),
            prod: vec![Accumulator::default(); d],
            log_a: vec![Accumulator::default(); d],
            abs_b: vec![Accumulator::default(); d],
        };
        let mut x = vec![0.0; d];
        let mut p = vec![0.0; d];
        for _ in 0..sizes[c] {
            x.iter_mut().for_each(|v| *v = 0.0);
            p.iter_mut().for_each(|v| *v = 1.0);
            for _ in 0..n_terms {
                spec.sample_into(&mut rng, &mut a, &mut b);
                for i in 0..d {
                    x[i] += p[i] * b[i];
                    p[i] *= a[i];
                    part.log_a[i].push(a[i].abs().ln());
                    part.abs_b[i].push(b[i].abs());
                }
            }
            part.xs.extend_from_slice(&x);
            for i in 0..d {
                part.prod[i].push(p[i].abs());
            }
        }
        part
    });
    let mut prod = vec![Accumulator::default(); d];
    let mut log_a = vec![Accumulator::default(); d];
    let mut abs_b = vec![Accumulator::default(); d];
    let mut xs = Vec::with_capacity(cfg.n_samples * d);
    for p in parts {
        xs.extend(p.xs);
        for i in 0..d {
            prod[i].merge(&p.prod[i]);
            log_a[i].merge(&p.log_a[i]);
            abs_b[i].merge(&p.abs_b[i]);
        }
    }
    let remainder = (0..d)
        .map(|i| {
            let r = log_a[i].mean().exp();
            if r < 1.0 {
                prod[i].mean() * abs_b[i].mean() / (1.0 - r)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let batch = SampleBatch::from_rows(
        xs,
        alpha.coordinates.clone(),
        spec.blocks().clone(),
        meta(spec, "perpetuity", cfg),
    );
    Ok(PerpetuityBatch { batch, remainder })
}

/// Two-sample Kolmogorov-Smirnov distance per coordinate.
pub fn ks_by_coordinate(a: &SampleBatch, b: &SampleBatch) -> Vec<f64> {
    assert_eq!(a.dim(), b.dim());
    (0..a.dim())
        .map(|j| {
            let x: Vec<f64> = a.column(j).collect();
            let y: Vec<f64> = b.column(j).collect();
            ks_distance(&x, &y)
        })
        .collect()
}

/// Sign group generated by the signs of `A` observed in `n` draws.
pub fn observed_sign_group(spec: &ModelSpec, n: usize, seed: u64) -> SignGroup {
    let d = spec.dim();
    let mut rng = StreamFactory::new(seed).stream(Lane::Pilot, 1 << 41);
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let masks: Vec<_> = (0..n)
        .map(|_| {
            spec.sample_into(&mut rng, &mut a, &mut b);
            mask_of_signs(&a)
        })
        .collect();
    SignGroup::generated_by(d, masks)
}
