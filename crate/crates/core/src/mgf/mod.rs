//! Moment generating quantities of `U = (alpha_1 log|A_1|, alpha_2 log|A_2|)`:
//! the tail indices `alpha`, `phi(xi) = E exp<xi, U>`, its derivatives, and
//! the mixed block moment `psi`.

mod assumptions;

pub use assumptions::{
    assess_model, check_assumptions, AssumptionEntry, AssumptionId, AssumptionReport, CheckOptions, Status,
};

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{cholesky, Vec2};
use crate::models::{bekk_covariance, mgf_jet, Family, ModelError, ModelSpec};
use crate::quadrature::{hermite_rule, GaussHermite, MAX_HERMITE_NODES};
use crate::rng::{chunk_sizes, map_chunks, Lane, StreamFactory};
use crate::special::{gaussian_abs_moment_1d, Jet2};
use crate::stats::{moment_from_chunks, Accumulator, Estimate, MomentEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MgfError {
    #[error("no Kesten exponent for coordinate {}: E|A|^s < 1 on the whole search range", coord + 1)]
    NoRoot { coord: usize },
    #[error("E log|A_{}| = {drift:.6} is not negative", coord + 1)]
    NegativeDriftViolated { coord: usize, drift: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("tilted expectation diverges at xi = ({:.6}, {:.6})", xi[0], xi[1])]
    OutsideDomain { xi: Vec2 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Upper end of the exponent search range.
pub const S_MAX: f64 = 64.0;
/// Lower end of the exponent search range.
pub const S_MIN: f64 = 1e-6;
/// Relative agreement required between consecutive quadrature orders.
pub const QUADRATURE_TOL: f64 = 1e-10;
const DEFAULT_MC_DRAWS: usize = 1_000_000;
const MC_CHUNK: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub method: &'static str,
    pub iterations: usize,
    /// `|E|A_i|^alpha - 1|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailIndices {
    /// Representative exponents of the two blocks.
    pub alpha: Vec2,
    /// Exponent of every coordinate.
    pub coordinates: Vec<f64>,
    pub solver: Vec<AlphaSolution>,
}

impl TailIndices {
    /// Indices given directly (for two-coordinate models).
    pub fn given(alpha: Vec2) -> Self {
        Self {
            alpha,
            coordinates: alpha.to_vec(),
            solver: Vec::new(),
        }
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.coordinates[i]
    }
}

/// Moment evaluator for `s -> E|A_i|^s`.
enum Marginal {
    Closed,
    Samples(Vec<f64>),
}

fn marginal_samples(spec: &ModelSpec, coord: usize, n: usize, seed: u64) -> Vec<f64> {
    let f = StreamFactory::new(seed);
    let d = spec.dim();
    let sizes = chunk_sizes(n, MC_CHUNK);
    map_chunks(sizes.len(), |c| {
        let mut rng = f.stream(Lane::MomentSample, c as u64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        (0..sizes[c])
            .map(|_| {
                spec.sample_into(&mut rng, &mut a, &mut b);
                a[coord].abs().ln()
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Gauss-Hermite expectation with node doubling until consecutive orders agree.
fn adaptive_1d<const K: usize>(f: impl Fn(f64) -> [f64; K]) -> ([f64; K], bool) {
    let eval = |q: &GaussHermite| {
        let mut acc = [0.0; K];
        for (&x, &w) in q.nodes().iter().zip(q.weights()) {
            let v = f(x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc
    };
    let mut n = 64;
    let mut prev = eval(hermite_rule(n));
    while n < MAX_HERMITE_NODES {
        n *= 2;
        let next = eval(hermite_rule(n));
        let ok =
            (0..K).all(|k| (next[k] - prev[k]).abs() <= QUADRATURE_TOL * next[0].abs().max(next[k].abs()).max(1e-300));
        prev = next;
        if ok {
            return (prev, true);
        }
    }
    (prev, false)
}

impl Marginal {
    fn for_spec(spec: &ModelSpec, coord: usize, seed: u64) -> Self {
        let analytic = match spec.family() {
            Family::Custom(m) => coord < 2 && m.mgf_jet([0.0, 0.0]).is_some(),
            _ => coord < 2,
        };
        if analytic {
            Marginal::Closed
        } else {
            Marginal::Samples(marginal_samples(spec, coord, DEFAULT_MC_DRAWS, seed))
        }
    }

    fn method(&self, spec: &ModelSpec) -> &'static str {
        match (self, spec.family()) {
            (Marginal::Samples(_), _) => "monte_carlo",
            (_, Family::CccGarch { .. }) => "quadrature",
            _ => "closed_form",
        }
    }

    /// `E log|A_i|`.
    fn drift(&self, spec: &ModelSpec, coord: usize) -> f64 {
        match (self, spec.family()) {
            (Marginal::Samples(l), _) => l.iter().sum::<f64>() / l.len() as f64,
            (_, Family::LogGaussian { m, .. }) => m[coord],
            (_, Family::CccGarch { b, c, .. }) => adaptive_1d(|z| [(b[coord] + c[coord] * z * z).ln()]).0[0],
            (_, Family::BekkDiag { lags, .. }) => {
                let s = bekk_covariance(lags);
                0.5 * s[coord][coord].ln() - 0.5 * (crate::special::EULER_GAMMA + std::f64::consts::LN_2)
            }
            (_, Family::Constant { a, .. }) => a[coord].abs().ln(),
            (_, Family::Custom(_)) => {
                let j = self.jet(spec, coord, 0.0);
                j[1]
            }
        }
    }

    /// `log E|A_i|^s` and its first two derivatives in `s`.
    fn jet(&self, spec: &ModelSpec, coord: usize, s: f64) -> [f64; 3] {
        let from_moments = |m: [f64; 3]| {
            let l1 = m[1] / m[0];
            [m[0].ln(), l1, m[2] / m[0] - l1 * l1]
        };
        match (self, spec.family()) {
            (Marginal::Samples(l), _) => {
                let n = l.len() as f64;
                let mut m = [0.0; 3];
                for &x in l {
                    let e = (s * x).exp();
                    m[0] += e;
                    m[1] += e * x;
                    m[2] += e * x * x;
                }
                from_moments([m[0] / n, m[1] / n, m[2] / n])
            }
            (_, Family::LogGaussian { m, c, .. }) => [
                s * m[coord] + 0.5 * s * s * c[coord][coord],
                m[coord] + s * c[coord][coord],
                c[coord][coord],
            ],
            (_, Family::CccGarch { b, c, .. }) => {
                let (mom, _) = adaptive_1d(|z| {
                    let l = (b[coord] + c[coord] * z * z).ln();
                    let e = (s * l).exp();
                    [e, e * l, e * l * l]
                });
                from_moments(mom)
            }
            (_, Family::BekkDiag { lags, .. }) => {
                let ls = 0.5 * bekk_covariance(lags)[coord][coord].ln();
                let g = gaussian_abs_moment_1d(s);
                let j = from_moments(g);
                [j[0] + s * ls, j[1] + ls, j[2]]
            }
            (_, Family::Constant { a, .. }) => {
                let l = a[coord].abs().ln();
                [s * l, l, 0.0]
            }
            (_, Family::Custom(model)) => {
                let mut theta = [0.0; 2];
                theta[coord] = s;
                let j = model.mgf_jet(theta).expect("declared moment evaluator");
                from_moments([j.value, j.grad[coord], j.hess[coord][coord]])
            }
        }
    }
}

/// `E log|A_i|` for coordinate `coord` (zero-based).
pub fn log_drift(spec: &ModelSpec, coord: usize) -> f64 {
    Marginal::for_spec(spec, coord, spec.seed().unwrap_or(0)).drift(spec, coord)
}

/// Solves `E|A_i|^alpha = 1` for coordinate `coord` (zero-based).
///
/// The map `s -> log E|A_i|^s` is convex with negative slope at zero, so
/// its positive root is bracketed by doubling `s` up to [`S_MAX`] and then
/// refined by Newton steps that fall back to bisection whenever they leave
/// the bracket.
pub fn solve_alpha(spec: &ModelSpec, coord: usize, tol: f64) -> Result<AlphaSolution, MgfError> {
    let seed = spec.seed().unwrap_or(0);
    let marginal = Marginal::for_spec(spec, coord, seed);
    let drift = marginal.drift(spec, coord);
    if !(drift < 0.0) {
        return Err(MgfError::NegativeDriftViolated { coord, drift });
    }
    let f = |s: f64| marginal.jet(spec, coord, s);
    let mut lo = S_MIN;
    let mut hi = 1.0;
    let mut iterations = 0;
    let mut fh = f(hi);
    while fh[0] < 0.0 {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if hi > S_MAX {
            return Err(MgfError::NoRoot { coord });
        }
        fh = f(hi);
    }
    // Newton from the right converges monotonically for convex f.
    let mut s = hi;
    let mut cur = fh;
    for _ in 0..200 {
        if cur[0].abs() < 1e-3 * tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        iterations += 1;
        let mut next = s - cur[0] / cur[1];
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        s = next;
        cur = f(s);
        if cur[0] > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
    }
    Ok(AlphaSolution {
        alpha: s,
        method: marginal.method(spec),
        iterations,
        residual: cur[0].exp_m1().abs(),
    })
}

/// Solves both representative exponents and extends them over the blocks.
pub fn tail_indices(spec: &ModelSpec, tol: f64) -> Result<TailIndices, MgfError> {
    let s1 = solve_alpha(spec, 0, tol)?;
    let s2 = solve_alpha(spec, 1, tol)?;
    let alpha = [s1.alpha, s2.alpha];
    let coordinates = block_exponents(spec, alpha)?;
    Ok(TailIndices {
        alpha,
        coordinates,
        solver: vec![s1, s2],
    })
}

/// Per-coordinate exponents implied by the declared blocks: within a block
/// `|A_i|^{alpha_i} = |A_rep|^{alpha_rep}`. The relation is validated on
/// `10^4` draws (relative tolerance `1e-12`).
pub fn block_exponents(spec: &ModelSpec, alpha: Vec2) -> Result<Vec<f64>, MgfError> {
    let d = spec.dim();
    if d == 2 {
        return Ok(alpha.to_vec());
    }
    let mut rng = StreamFactory::new(spec.seed().unwrap_or(0)).stream(Lane::Draws, u64::MAX);
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let draws: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            spec.sample_into(&mut rng, &mut a, &mut b);
            a.iter().map(|x| x.abs().ln()).collect()
        })
        .collect();
    let mut out = vec![0.0; d];
    out[0] = alpha[0];
    out[1] = alpha[1];
    for i in 2..d {
        let j = spec.blocks().block_of(i);
        let row = draws
            .iter()
            .find(|l| l[i].abs() > 1e-3)
            .ok_or(ModelError::BlockViolation { i, j })?;
        out[i] = alpha[j] * row[j] / row[i];
        for l in &draws {
            let (x, y) = (out[i] * l[i], alpha[j] * l[j]);
            if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                return Err(ModelError::BlockViolation { i, j }.into());
            }
        }
    }
    Ok(out)
}

/// Backend used to evaluate `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    ClosedForm,
    /// Tensor Gauss-Hermite starting at `nodes` per dimension.
    Quadrature {
        nodes: usize,
    },
    MonteCarlo {
        n: usize,
        seed: u64,
    },
}

/// Quadrature table of `(weight, log|A_1|, log|A_2|)`.
type NodeTable = Vec<[f64; 3]>;

#[derive(Debug, Clone)]
enum Backend {
    Closed,
    Quad(Arc<Vec<NodeTable>>),
    Mc(Arc<Vec<Vec2>>),
}

/// Evaluates `phi(xi) = E|A_1|^{xi_1 alpha_1} |A_2|^{xi_2 alpha_2}` and its derivatives.
#[derive(Debug, Clone)]
pub struct PhiEvaluator {
    spec: ModelSpec,
    alpha: Vec2,
    coordinates: Vec<f64>,
    method: Method,
    backend: Backend,
    mc_draws: usize,
    seed: u64,
}

/// Maps independent standard normals to `(log|A_1|, log|A_2|)` for the
/// Gaussian-driven families.
fn gaussian_log_a(spec: &ModelSpec) -> Option<Box<dyn Fn(f64, f64) -> Vec2 + '_>> {
    match spec.family() {
        Family::LogGaussian { m, c, .. } => {
            let l = cholesky(c);
            Some(Box::new(move |z1, z2| {
                [m[0] + l[0][0] * z1, m[1] + l[1][0] * z1 + l[1][1] * z2]
            }))
        }
        Family::CccGarch { b, c, eta, .. } => {
            let mix = (1.0 - eta * eta).sqrt();
            Some(Box::new(move |z1, z2| {
                let w = eta * z1 + mix * z2;
                [(b[0] + c[0] * z1 * z1).ln(), (b[1] + c[1] * w * w).ln()]
            }))
        }
        Family::BekkDiag { lags, .. } => {
            let s = bekk_covariance(lags);
            let (s1, s2) = (s[0][0].sqrt(), s[1][1].sqrt());
            let r = s[0][1] / (s1 * s2);
            let mix = (1.0 - r * r).sqrt();
            Some(Box::new(move |z1, z2| {
                [(s1 * z1.abs()).ln(), (s2 * (r * z1 + mix * z2).abs()).ln()]
            }))
        }
        Family::Constant { a, .. } => {
            let l = [a[0].abs().ln(), a[1].abs().ln()];
            Some(Box::new(move |_, _| l))
        }
        Family::Custom(_) => None,
    }
}

impl PhiEvaluator {
    pub fn new(spec: &ModelSpec, alpha: &TailIndices, method: Method) -> Result<Self, MgfError> {
        let seed = spec.seed().unwrap_or(0);
        let (backend, mc_draws, seed) = match method {
            Method::ClosedForm => {
                if mgf_jet(spec, [0.5, 0.5]).is_none() {
                    return Err(MgfError::Unsupported(format!(
                        "no closed form for {}",
                        spec.family().name()
                    )));
                }
                (Backend::Closed, DEFAULT_MC_DRAWS, seed)
            }
            Method::Quadrature { nodes } => {
                let map = gaussian_log_a(spec)
                    .ok_or_else(|| MgfError::Unsupported("quadrature needs a Gaussian-driven family".into()))?;
                if !(1..=MAX_HERMITE_NODES).contains(&nodes) {
                    return Err(MgfError::Unsupported(format!("{nodes} quadrature nodes")));
                }
                let mut tables = Vec::new();
                let mut n = nodes;
                loop {
                    let q = hermite_rule(n);
                    let mut t = Vec::with_capacity(n * n);
                    for (&x, &wx) in q.nodes().iter().zip(q.weights()) {
                        for (&y, &wy) in q.nodes().iter().zip(q.weights()) {
                            let l = map(x, y);
                            t.push([wx * wy, l[0], l[1]]);
                        }
                    }
                    tables.push(t);
                    if n * 2 > MAX_HERMITE_NODES {
                        break;
                    }
                    n *= 2;
                }
                (Backend::Quad(Arc::new(tables)), DEFAULT_MC_DRAWS, seed)
            }
            Method::MonteCarlo { n, seed } => {
                let f = StreamFactory::new(seed);
                let sizes = chunk_sizes(n, MC_CHUNK);
                let d = spec.dim();
                let logs = map_chunks(sizes.len(), |c| {
                    let mut rng = f.stream(Lane::MomentSample, c as u64);
                    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
                    (0..sizes[c])
                        .map(|_| {
                            spec.sample_into(&mut rng, &mut a, &mut b);
                            [a[0].abs().ln(), a[1].abs().ln()]
                        })
                        .collect::<Vec<_>>()
                })
                .concat();
                (Backend::Mc(Arc::new(logs)), n, seed)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            alpha: alpha.alpha,
            coordinates: alpha.coordinates.clone(),
            method,
            backend,
            mc_draws,
            seed,
        })
    }

    /// Closed form when available, quadrature for Gaussian-driven families,
    /// Monte Carlo otherwise.
    pub fn auto(spec: &ModelSpec, alpha: &TailIndices) -> Result<Self, MgfError> {
        if mgf_jet(spec, [0.5, 0.5]).is_some() {
            Self::new(spec, alpha, Method::ClosedForm)
        } else if gaussian_log_a(spec).is_some() {
            Self::new(spec, alpha, Method::Quadrature { nodes: 64 })
        } else {
            Self::new(
                spec,
                alpha,
                Method::MonteCarlo {
                    n: DEFAULT_MC_DRAWS,
                    seed: spec.seed().unwrap_or(0),
                },
            )
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn alpha(&self) -> Vec2 {
        self.alpha
    }

    pub fn coordinate_alphas(&self) -> &[f64] {
        &self.coordinates
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Whether results carry no sampling error.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self.backend, Backend::Mc(_))
    }

    /// Sample size and seed used for Monte Carlo moments (`psi`, diagnostics).
    pub fn with_sampling(mut self, n: usize, seed: u64) -> Self {
        self.mc_draws = n;
        self.seed = seed;
        self
    }

    /// `phi`, gradient and Hessian in `xi`.
    pub fn jet(&self, xi: Vec2) -> Result<Jet2, MgfError> {
        Ok(self.jet_with_errors(xi)?.0)
    }

    /// Jet together with standard errors of `(phi, d1 phi, d2 phi)`.
    fn jet_with_errors(&self, xi: Vec2) -> Result<(Jet2, [f64; 3]), MgfError> {
        let a = self.alpha;
        let out = match &self.backend {
            Backend::Closed => {
                let j = mgf_jet(&self.spec, [xi[0] * a[0], xi[1] * a[1]]).ok_or(MgfError::OutsideDomain { xi })?;
                let jet = Jet2 {
                    value: j.value,
                    grad: [a[0] * j.grad[0], a[1] * j.grad[1]],
                    hess: [
                        [a[0] * a[0] * j.hess[0][0], a[0] * a[1] * j.hess[0][1]],
                        [a[1] * a[0] * j.hess[1][0], a[1] * a[1] * j.hess[1][1]],
                    ],
                };
                (jet, [0.0; 3])
            }
            Backend::Quad(tables) => {
                let eval = |t: &NodeTable| {
                    let mut s = [0.0; 6];
                    for &[w, l1, l2] in t {
                        let (u1, u2) = (a[0] * l1, a[1] * l2);
                        let e = w * (xi[0] * u1 + xi[1] * u2).exp();
                        s[0] += e;
                        s[1] += e * u1;
                        s[2] += e * u2;
                        s[3] += e * u1 * u1;
                        s[4] += e * u1 * u2;
                        s[5] += e * u2 * u2;
                    }
                    s
                };
                let mut prev = eval(&tables[0]);
                for t in &tables[1..] {
                    let next = eval(t);
                    let done = (next[0] - prev[0]).abs() <= QUADRATURE_TOL * next[0].abs();
                    prev = next;
                    if done {
                        break;
                    }
                }
                let s = prev;
                (
                    Jet2 {
                        value: s[0],
                        grad: [s[1], s[2]],
                        hess: [[s[3], s[4]], [s[4], s[5]]],
                    },
                    [0.0; 3],
                )
            }
            Backend::Mc(logs) => {
                let mut acc = [Accumulator::default(); 6];
                for l in logs.iter() {
                    let (u1, u2) = (a[0] * l[0], a[1] * l[1]);
                    let e = (xi[0] * u1 + xi[1] * u2).exp();
                    for (k, v) in [e, e * u1, e * u2, e * u1 * u1, e * u1 * u2, e * u2 * u2]
                        .into_iter()
                        .enumerate()
                    {
                        acc[k].push(v);
                    }
                }
                if acc[0].max_share() > 0.25 {
                    return Err(MgfError::OutsideDomain { xi });
                }
                let m: Vec<f64> = acc.iter().map(|x| x.mean()).collect();
                let jet = Jet2 {
                    value: m[0],
                    grad: [m[1], m[2]],
                    hess: [[m[3], m[4]], [m[4], m[5]]],
                };
                (
                    jet,
                    [
                        acc[0].estimate().stderr,
                        acc[1].estimate().stderr,
                        acc[2].estimate().stderr,
                    ],
                )
            }
        };
        let j = &out.0;
        if !(j.value.is_finite() && j.grad.iter().chain(j.hess.iter().flatten()).all(|v| v.is_finite())) {
            return Err(MgfError::OutsideDomain { xi });
        }
        Ok(out)
    }

    pub fn phi(&self, xi: Vec2) -> Result<Estimate, MgfError> {
        let (j, se) = self.jet_with_errors(xi)?;
        Ok(Estimate {
            value: j.value,
            stderr: se[0],
        })
    }

    /// `(d1 phi, d2 phi) = E[U exp<xi, U>]`.
    pub fn grad_phi(&self, xi: Vec2) -> Result<Vec2, MgfError> {
        Ok(self.jet(xi)?.grad)
    }

    pub fn grad_phi_estimate(&self, xi: Vec2) -> Result<[Estimate; 2], MgfError> {
        let (j, se) = self.jet_with_errors(xi)?;
        Ok([
            Estimate {
                value: j.grad[0],
                stderr: se[1],
            },
            Estimate {
                value: j.grad[1],
                stderr: se[2],
            },
        ])
    }

    /// Block norms `||x^(j)||_alpha` of a vector.
    pub fn block_norms(&self, x: &[f64]) -> Vec2 {
        block_norms(&self.spec, &self.coordinates, x)
    }
}

/// `||x^(j)||_alpha = max_{i in J_j} |x_i|^{alpha_i}` for both blocks.
pub fn block_norms(spec: &ModelSpec, alphas: &[f64], x: &[f64]) -> Vec2 {
    let mut out = [0.0f64; 2];
    for (j, o) in out.iter_mut().enumerate() {
        for &i in spec.blocks().class(j) {
            *o = o.max(x[i].abs().powf(alphas[i]));
        }
    }
    out
}

/// Monte Carlo estimate of
/// `psi(xi) = E|A_1|^{xi_1 a_1}||B2||^{xi_2} + E||B1||^{xi_1}|A_2|^{xi_2 a_2}
///          + E||B1||^{xi_1}||B2||^{xi_2} + phi(xi)`.
pub fn psi(ev: &PhiEvaluator, xi: Vec2) -> MomentEstimate {
    let spec = &ev.spec;
    let d = spec.dim();
    let a = ev.alpha;
    let f = StreamFactory::new(ev.seed);
    let sizes = chunk_sizes(ev.mc_draws, MC_CHUNK);
    let chunks = map_chunks(sizes.len(), |c| {
        let mut rng = f.stream(Lane::Diagnostics, c as u64);
        let (mut av, mut bv) = (vec![0.0; d], vec![0.0; d]);
        let mut acc = Accumulator::default();
        for _ in 0..sizes[c] {
            spec.sample_into(&mut rng, &mut av, &mut bv);
            let nb = block_norms(spec, &ev.coordinates, &bv);
            let p1 = av[0].abs().powf(xi[0] * a[0]);
            let p2 = av[1].abs().powf(xi[1] * a[1]);
            let q1 = nb[0].powf(xi[0]);
            let q2 = nb[1].powf(xi[1]);
            acc.push(p1 * q2 + q1 * p2 + q1 * q2 + p1 * p2);
        }
        acc
    });
    moment_from_chunks(&chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BLaw;

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

    /// `E|Z|^p` by Gauss-Legendre after `z = e^v`, which removes the kink at zero.
    fn abs_normal_moment(p: f64) -> f64 {
        let q = crate::quadrature::GaussLegendre::new(400);
        let c = (2.0 / std::f64::consts::PI).sqrt();
        q.integrate(-40.0, 4.0, |v| c * ((p + 1.0) * v - 0.5 * (2.0 * v).exp()).exp())
    }

    fn ccc(eta: f64) -> ModelSpec {
        ModelSpec::new(Family::CccGarch {
            a: [1.0, 1.0],
            b: [0.5, 0.5],
            c: [0.5, 0.5],
            eta,
        })
        .unwrap()
    }

    #[test]
    fn alpha_examples() {
        let s = solve_alpha(&ccc(0.5), 0, 1e-10).unwrap();
        assert!((s.alpha - 1.0).abs() < 1e-8, "{s:?}");
        assert!(s.residual < 1e-10);
        let s = solve_alpha(&log_gaussian(0.5), 1, 1e-12).unwrap();
        assert!((s.alpha - 1.0).abs() < 1e-12);
        let c = ModelSpec::new(Family::Constant {
            a: vec![0.9, 0.9],
            b: vec![1.0, 1.0],
        })
        .unwrap();
        assert_eq!(solve_alpha(&c, 0, 1e-10), Err(MgfError::NoRoot { coord: 0 }));
        let c = ModelSpec::new(Family::Constant {
            a: vec![1.5, 0.9],
            b: vec![1.0, 1.0],
        })
        .unwrap();
        assert!(matches!(
            solve_alpha(&c, 0, 1e-10),
            Err(MgfError::NegativeDriftViolated { .. })
        ));
    }

    #[test]
    fn bekk_alpha_matches_quadrature() {
        let spec = ModelSpec::new(Family::BekkDiag {
            lags: vec![[0.6, 0.2], [0.3, 0.7]],
            cov: [[1.0, 0.0], [0.0, 1.0]],
        })
        .unwrap();
        let s = solve_alpha(&spec, 0, 1e-12).unwrap();
        let sigma = (0.36f64 + 0.09).sqrt();
        let m = sigma.powf(s.alpha) * abs_normal_moment(s.alpha);
        assert!((m - 1.0).abs() < 1e-8, "{m}");
    }

    #[test]
    fn phi_examples() {
        let spec = log_gaussian(0.5);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        for method in [Method::ClosedForm, Method::Quadrature { nodes: 64 }] {
            let ev = PhiEvaluator::new(&spec, &ti, method).unwrap();
            assert!((ev.phi([0.0, 0.0]).unwrap().value - 1.0).abs() < 1e-12);
            assert!((ev.phi([1.0, 0.0]).unwrap().value - 1.0).abs() < 1e-10);
            assert!((ev.phi([2.0 / 3.0, 2.0 / 3.0]).unwrap().value - 1.0).abs() < 1e-10);
        }
        assert_eq!(
            PhiEvaluator::new(&spec, &ti, Method::ClosedForm)
                .unwrap()
                .phi([0.0, 0.0])
                .unwrap()
                .value,
            1.0
        );
    }

    #[test]
    fn gradient_example_and_symmetry() {
        let spec = log_gaussian(0.6);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
        let g = ev.grad_phi([1.0, 0.0]).unwrap();
        assert!((g[1] - 0.1).abs() < 1e-10);
        let g = ev.grad_phi([0.4, 0.4]).unwrap();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for spec in [
            log_gaussian(0.3),
            ModelSpec::new(Family::BekkDiag {
                lags: vec![[0.6, 0.2], [0.3, 0.7]],
                cov: [[1.0, 0.0], [0.0, 1.0]],
            })
            .unwrap(),
        ] {
            let ti = tail_indices(&spec, 1e-12).unwrap();
            let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
            let h = 1e-5;
            for xi in [[0.2, 0.7], [0.5, 0.5], [0.9, 0.1]] {
                let j = ev.jet(xi).unwrap();
                for k in 0..2 {
                    let mut p = xi;
                    let mut m = xi;
                    p[k] += h;
                    m[k] -= h;
                    let fd = (ev.phi(p).unwrap().value - ev.phi(m).unwrap().value) / (2.0 * h);
                    assert!(
                        (fd - j.grad[k]).abs() <= 1e-6 * j.grad[k].abs().max(1e-3),
                        "{fd} {:?}",
                        j.grad
                    );
                    let gp = ev.grad_phi(p).unwrap();
                    let gm = ev.grad_phi(m).unwrap();
                    for l in 0..2 {
                        let fd2 = (gp[l] - gm[l]) / (2.0 * h);
                        assert!((fd2 - j.hess[k][l]).abs() <= 1e-5 * j.hess[k][l].abs().max(1e-2));
                    }
                }
            }
        }
    }

    #[test]
    fn quadrature_matches_closed_form_with_derivatives() {
        let spec = log_gaussian(0.4);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let c = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
        let q = PhiEvaluator::new(&spec, &ti, Method::Quadrature { nodes: 64 }).unwrap();
        let (a, b) = (c.jet([0.6, 0.7]).unwrap(), q.jet([0.6, 0.7]).unwrap());
        assert!((a.value - b.value).abs() < 1e-10);
        for k in 0..2 {
            assert!((a.grad[k] - b.grad[k]).abs() < 1e-9);
            for l in 0..2 {
                assert!((a.hess[k][l] - b.hess[k][l]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn monte_carlo_gradient_agrees_with_closed_form() {
        let spec = log_gaussian(0.5);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let c = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
        let m = PhiEvaluator::new(&spec, &ti, Method::MonteCarlo { n: 400_000, seed: 17 }).unwrap();
        for xi in [[0.1, 0.8], [0.5, 0.3], [0.7, 0.7], [0.25, 0.45], [0.9, 0.05]] {
            let g = c.grad_phi(xi).unwrap();
            let e = m.grad_phi_estimate(xi).unwrap();
            for k in 0..2 {
                assert!((e[k].value - g[k]).abs() < 3.0 * e[k].stderr, "{xi:?} {e:?} {g:?}");
            }
            let p = m.phi(xi).unwrap();
            assert!((p.value - c.phi(xi).unwrap().value).abs() < 3.0 * p.stderr);
        }
    }

    #[test]
    fn custom_without_density_refuses_quadrature() {
        #[derive(Debug)]
        struct Flip;
        impl crate::models::CustomModel for Flip {
            fn name(&self) -> &str {
                "flip"
            }
            fn dim(&self) -> usize {
                2
            }
            fn sample(&self, rng: &mut crate::rng::Stream, a: &mut [f64], b: &mut [f64]) {
                use rand::Rng;
                a[0] = if rng.random::<bool>() { 2.0 } else { 0.25 };
                a[1] = 0.5;
                b[0] = 1.0;
                b[1] = 1.0;
            }
            fn independent_ab(&self) -> bool {
                true
            }
        }
        let spec = ModelSpec::new(Family::Custom(Arc::new(Flip))).unwrap();
        let ti = TailIndices::given([1.0, 1.0]);
        assert!(matches!(
            PhiEvaluator::new(&spec, &ti, Method::Quadrature { nodes: 64 }),
            Err(MgfError::Unsupported(_))
        ));
        // E|A_1|^s = (2^s + 4^{-s}) / 2 = 1 at 2^s = golden ratio
        let s = solve_alpha(&spec, 0, 1e-10).unwrap();
        assert_eq!(s.method, "monte_carlo");
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s.alpha - golden.log2()).abs() < 0.01, "{s:?}");
    }

    #[test]
    fn psi_special_cases() {
        // Zero B: psi = phi
        let spec = ModelSpec::new(Family::LogGaussian {
            m: [-0.5, -0.5],
            c: [[1.0, 0.5], [0.5, 1.0]],
            b_law: BLaw::Constant([0.0, 0.0]),
        })
        .unwrap();
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm)
            .unwrap()
            .with_sampling(400_000, 3);
        let xi = [0.4, 0.5];
        let p = psi(&ev, xi);
        let exact = ev.phi(xi).unwrap().value;
        assert!((p.value - exact).abs() < 3.0 * p.stderr, "{p:?} {exact}");

        // CccGarch with constant B: psi = a2^{xi2 a2} E A1^.. + a1^.. E A2^.. + const + phi
        let spec = ModelSpec::new(Family::CccGarch {
            a: [1.5, 2.0],
            b: [0.5, 0.5],
            c: [0.5, 0.5],
            eta: 0.5,
        })
        .unwrap();
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::auto(&spec, &ti).unwrap().with_sampling(400_000, 5);
        let xi = [0.5, 0.5];
        let m1 = ev.phi([xi[0], 0.0]).unwrap().value;
        let m2 = ev.phi([0.0, xi[1]]).unwrap().value;
        let (q1, q2) = (1.5f64.powf(ti.alpha[0] * xi[0]), 2.0f64.powf(ti.alpha[1] * xi[1]));
        let exact = m1 * q2 + q1 * m2 + q1 * q2 + ev.phi(xi).unwrap().value;
        let p = psi(&ev, xi);
        assert!((p.value - exact).abs() < 3.0 * p.stderr, "{p:?} {exact}");
        assert!(p.stable);
    }

    #[test]
    fn psi_product_form_for_independent_gaussian_b() {
        let spec = log_gaussian(0.5);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm)
            .unwrap()
            .with_sampling(400_000, 9);
        let xi = [0.6, 0.3];
        // alpha = 1 so ||B_j|| = |B_j|
        let eb = abs_normal_moment;
        let m1 = ev.phi([xi[0], 0.0]).unwrap().value;
        let m2 = ev.phi([0.0, xi[1]]).unwrap().value;
        let exact = m1 * eb(xi[1]) + eb(xi[0]) * m2 + eb(xi[0]) * eb(xi[1]) + ev.phi(xi).unwrap().value;
        let p = psi(&ev, xi);
        assert!((p.value - exact).abs() < 3.0 * p.stderr, "{p:?} {exact}");
    }

    #[test]
    fn convexity_and_segment() {
        use rand::{Rng, SeedableRng};
        let spec = log_gaussian(0.5);
        let ti = tail_indices(&spec, 1e-12).unwrap();
        let ev = PhiEvaluator::new(&spec, &ti, Method::ClosedForm).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.random::<f64>() * 1.5, rng.random::<f64>() * 1.5];
            let y = [rng.random::<f64>() * 1.5, rng.random::<f64>() * 1.5];
            let mid = ev.phi([(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0]).unwrap().value;
            assert!(mid <= (ev.phi(x).unwrap().value + ev.phi(y).unwrap().value) / 2.0 + 1e-12);
        }
        for k in 1..10 {
            let s = k as f64 / 10.0;
            assert!(ev.phi([s, 1.0 - s]).unwrap().value < 1.0);
        }
    }
}
