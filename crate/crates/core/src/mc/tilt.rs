//! Esscher transform `dP_xi = e^{<xi, U>} / phi(xi) dP` of the increment
//! law and the importance-sampling estimators built on it.

use serde::Serialize;

use super::McError;
use crate::group::{mask_of_signs, SignMask};
use crate::linalg::{cholesky, Mat2, Vec2};
use crate::mgf::PhiEvaluator;
use crate::models::{Family, ModelSpec};
use crate::quadrature::GaussLegendre;
use crate::rng::{chunk_sizes, map_chunks, Lane, Stream, StreamFactory};
use crate::stats::{Accumulator, Estimate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const PILOT_DRAWS: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-4;
const MAX_TRIALS: usize = 10_000_000;
const PATH_CHUNK: usize = 16_384;

#[derive(Debug, Clone)]
enum Kind {
    /// Exact for the log-Gaussian family: `U ~ N(mean, L L^T)`.
    Gaussian { mean: Vec2, chol: Mat2 },
    /// Accept a base draw with probability `min(1, e^{<xi,u>} / bound)`.
    Rejection { bound: f64 },
}

/// The tilted law of `(U, K)` at a fixed `xi`.
#[derive(Debug, Clone)]
pub struct EsscherTilt {
    pub xi: Vec2,
    /// `E_xi[U] = grad phi(xi) / phi(xi)`.
    pub drift: Vec2,
    /// Covariance of `U` under the tilt.
    pub cov: Mat2,
    pub log_phi: f64,
    /// Acceptance rate of the rejection sampler (1 for exact tilts).
    pub acceptance: f64,
    alpha: Vec2,
    spec: ModelSpec,
    kind: Kind,
}

fn base_u(spec: &ModelSpec, alpha: Vec2, rng: &mut Stream, a: &mut [f64], b: &mut [f64]) -> (Vec2, SignMask) {
    spec.sample_into(rng, a, b);
    (
        [alpha[0] * a[0].abs().ln(), alpha[1] * a[1].abs().ln()],
        mask_of_signs(a),
    )
}

impl EsscherTilt {
    /// Builds the tilt at `xi`; the rejection bound (non-Gaussian families)
    /// is twice the largest weight seen in a pilot run seeded by `seed`.
    pub fn new(ev: &PhiEvaluator, xi: Vec2, seed: u64) -> Result<Self, McError> {
        let spec = ev.spec().clone();
        let alpha = ev.alpha();
        let j = ev.jet(xi)?;
        let drift = [j.grad[0] / j.value, j.grad[1] / j.value];
        let cov = [
            [
                j.hess[0][0] / j.value - drift[0] * drift[0],
                j.hess[0][1] / j.value - drift[0] * drift[1],
            ],
            [
                j.hess[1][0] / j.value - drift[1] * drift[0],
                j.hess[1][1] / j.value - drift[1] * drift[1],
            ],
        ];
        let log_phi = j.value.ln();
        let (kind, acceptance) = match spec.family() {
            Family::LogGaussian { m, c, .. } if spec.dim() == 2 => {
                let th = [alpha[0] * xi[0], alpha[1] * xi[1]];
                let mean = [
                    alpha[0] * (m[0] + c[0][0] * th[0] + c[0][1] * th[1]),
                    alpha[1] * (m[1] + c[1][0] * th[0] + c[1][1] * th[1]),
                ];
                let s = [
                    [alpha[0] * alpha[0] * c[0][0], alpha[0] * alpha[1] * c[0][1]],
                    [alpha[1] * alpha[0] * c[1][0], alpha[1] * alpha[1] * c[1][1]],
                ];
                (
                    Kind::Gaussian {
                        mean,
                        chol: cholesky(&s),
                    },
                    1.0,
                )
            }
            _ => {
                let d = spec.dim();
                let mut rng = StreamFactory::new(seed).stream(Lane::Pilot, 1 << 42);
                let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
                let w: Vec<f64> = (0..PILOT_DRAWS)
                    .map(|_| {
                        let (u, _) = base_u(&spec, alpha, &mut rng, &mut a, &mut b);
                        (xi[0] * u[0] + xi[1] * u[1]).exp()
                    })
                    .collect();
                let bound = 2.0 * w.iter().cloned().fold(0.0, f64::max);
                let acc = w.iter().map(|x| (x / bound).min(1.0)).sum::<f64>() / w.len() as f64;
                if !(acc >= MIN_ACCEPTANCE) {
                    return Err(McError::RejectionStall { acceptance: acc });
                }
                (Kind::Rejection { bound }, acc)
            }
        };
        Ok(Self {
            xi,
            drift,
            cov,
            log_phi,
            acceptance,
            alpha,
            spec,
            kind,
        })
    }

    /// Whether draws follow the tilted law exactly (no rejection window).
    pub fn is_exact(&self) -> bool {
        matches!(self.kind, Kind::Gaussian { .. })
    }

    pub fn draws(&self) -> TiltedDraws<'_> {
        let d = self.spec.dim();
        TiltedDraws {
            tilt: self,
            a: vec![0.0; d],
            b: vec![0.0; d],
        }
    }
}

/// Draw buffer for one stream of tilted increments.
pub struct TiltedDraws<'a> {
    tilt: &'a EsscherTilt,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TiltedDraws<'_> {
    /// One `(U, K)` from the tilted law.
    pub fn next(&mut self, rng: &mut Stream) -> Result<(Vec2, SignMask), McError> {
        let t = self.tilt;
        match &t.kind {
            Kind::Gaussian { mean, chol } => {
                let z0: f64 = StandardNormal.sample(rng);
                let z1: f64 = StandardNormal.sample(rng);
                Ok((
                    [mean[0] + chol[0][0] * z0, mean[1] + chol[1][0] * z0 + chol[1][1] * z1],
                    0,
                ))
            }
            Kind::Rejection { bound } => {
                for _ in 0..MAX_TRIALS {
                    let (u, k) = base_u(&t.spec, t.alpha, rng, &mut self.a, &mut self.b);
                    let w = (t.xi[0] * u[0] + t.xi[1] * u[1]).exp() / bound;
                    if rng.random::<f64>() < w {
                        return Ok((u, k));
                    }
                }
                Err(McError::RejectionStall {
                    acceptance: 1.0 / MAX_TRIALS as f64,
                })
            }
        }
    }
}

/// A path `(S_n, L_n)`, `n = 0..=n_steps`, with `S_0 = 0` and `L_0 = id`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkPath {
    pub s: Vec<Vec2>,
    pub l: Vec<SignMask>,
}

pub fn tilted_walk(tilt: &EsscherTilt, n_steps: usize, stream: &mut Stream) -> Result<WalkPath, McError> {
    let mut draws = tilt.draws();
    let mut s = Vec::with_capacity(n_steps + 1);
    let mut l = Vec::with_capacity(n_steps + 1);
    let (mut cur, mut k) = ([0.0, 0.0], 0);
    s.push(cur);
    l.push(k);
    for _ in 0..n_steps {
        let (u, sign) = draws.next(stream)?;
        cur = [cur[0] + u[0], cur[1] + u[1]];
        k ^= sign;
        s.push(cur);
        l.push(k);
    }
    Ok(WalkPath { s, l })
}

/// Sample mean of `U` under the tilt from `n` draws.
pub fn tilted_mean(tilt: &EsscherTilt, n: usize, seed: u64) -> Result<[Estimate; 2], McError> {
    let f = StreamFactory::new(seed);
    let sizes = chunk_sizes(n, 65_536);
    let parts = map_chunks(sizes.len(), |c| -> Result<[Accumulator; 2], McError> {
        let mut rng = f.stream(Lane::TiltedWalk, c as u64);
        let mut draws = tilt.draws();
        let mut acc = [Accumulator::default(); 2];
        for _ in 0..sizes[c] {
            let (u, _) = draws.next(&mut rng)?;
            acc[0].push(u[0]);
            acc[1].push(u[1]);
        }
        Ok(acc)
    });
    let mut acc = [Accumulator::default(); 2];
    for p in parts {
        let p = p?;
        acc[0].merge(&p[0]);
        acc[1].merge(&p[1]);
    }
    Ok([acc[0].estimate(), acc[1].estimate()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IsConfig {
    pub paths: usize,
    pub seed: u64,
}

impl Default for IsConfig {
    fn default() -> Self {
        Self {
            paths: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceEstimate {
    pub t: f64,
    pub eps: f64,
    /// Importance-sampling estimate.
    pub is: Estimate,
    /// Plain Monte Carlo estimate, computed when at least 10 direct hits are expected.
    pub crude: Option<Estimate>,
    /// Number of tilted paths that reached the target.
    pub hits: u64,
    pub zero_hits: bool,
    /// Step cap `N = ceil(4 log t / rho)`.
    pub step_cap: usize,
    pub rho: f64,
}

fn common_drift(tilt: &EsscherTilt) -> Result<f64, McError> {
    let rho = 0.5 * (tilt.drift[0] + tilt.drift[1]);
    if rho > 0.0 {
        Ok(rho)
    } else {
        Err(McError::InvalidConfig(format!("tilted drift {rho} must be positive")))
    }
}

/// `P(exists n <= N: e^{S_{n,1}} > t, e^{S_{n,2}} > eps t)`.
///
/// Paths run under `P_xi*` until they first enter the target quadrant and
/// are weighted by `e^{-<xi*, S_tau>}` (times `phi(xi*)^tau`, which is 1 on
/// the level set).
pub fn joint_exceedance_prob(
    ev: &PhiEvaluator,
    xi_star: Vec2,
    t: f64,
    eps: f64,
    cfg: &IsConfig,
) -> Result<ExceedanceEstimate, McError> {
    if !(t > 1.0 && eps > 0.0) {
        return Err(McError::InvalidConfig("need t > 1 and eps > 0".into()));
    }
    let tilt = EsscherTilt::new(ev, xi_star, cfg.seed)?;
    let rho = common_drift(&tilt)?;
    let cap = ((4.0 * t.ln() / rho).ceil() as usize).max(1);
    let target = [t.ln(), (eps * t).ln()];
    let f = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.paths, PATH_CHUNK);
    let parts = map_chunks(sizes.len(), |c| -> Result<(Accumulator, u64), McError> {
        let mut rng = f.stream(Lane::Exceedance, c as u64);
        let mut draws = tilt.draws();
        let mut acc = Accumulator::default();
        let mut hits = 0;
        for _ in 0..sizes[c] {
            let mut s = [0.0, 0.0];
            let mut w = 0.0;
            for n in 1..=cap {
                let (u, _) = draws.next(&mut rng)?;
                s = [s[0] + u[0], s[1] + u[1]];
                if s[0] > target[0] && s[1] > target[1] {
                    w = (-(xi_star[0] * s[0] + xi_star[1] * s[1]) + n as f64 * tilt.log_phi).exp();
                    hits += 1;
                    break;
                }
            }
            acc.push(w);
        }
        Ok((acc, hits))
    });
    let mut acc = Accumulator::default();
    let mut hits = 0;
    for p in parts {
        let (a, h) = p?;
        acc.merge(&a);
        hits += h;
    }
    let is = acc.estimate();
    let crude = if is.value * cfg.paths as f64 >= 10.0 {
        Some(crude_exceedance(ev, target, cap, cfg))
    } else {
        None
    };
    Ok(ExceedanceEstimate {
        t,
        eps,
        is,
        crude,
        hits,
        zero_hits: hits == 0,
        step_cap: cap,
        rho,
    })
}

fn crude_exceedance(ev: &PhiEvaluator, target: Vec2, cap: usize, cfg: &IsConfig) -> Estimate {
    let spec = ev.spec();
    let alpha = ev.alpha();
    let d = spec.dim();
    let f = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.paths, PATH_CHUNK);
    let parts = map_chunks(sizes.len(), |c| {
        let mut rng = f.stream(Lane::CrudeExceedance, c as u64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        let mut acc = Accumulator::default();
        for _ in 0..sizes[c] {
            let mut s = [0.0, 0.0];
            let mut hit = 0.0;
            for _ in 0..cap {
                let (u, _) = base_u(spec, alpha, &mut rng, &mut a, &mut b);
                s = [s[0] + u[0], s[1] + u[1]];
                if s[0] > target[0] && s[1] > target[1] {
                    hit = 1.0;
                    break;
                }
            }
            acc.push(hit);
        }
        acc
    });
    let mut acc = Accumulator::default();
    parts.iter().for_each(|p| acc.merge(p));
    acc.estimate()
}

/// Gaussian leading term for a box probability of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussLeading {
    /// `e^{-<xi*, c>}` at the lower corner `c` of the box.
    pub weight: f64,
    /// `int_{C_n} h(w) e^{-<xi*, s(w) - c>} dw`.
    pub integral: f64,
    /// `weight * integral`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkBoxEstimate {
    pub n0: usize,
    pub n: usize,
    pub rho: f64,
    pub mc: Estimate,
    pub gauss: GaussLeading,
}

/// `P(n0 rho < S_{n,1} < n0 rho + 1, n0 rho + log eps < S_{n,2} < n0 rho + log eps + 1)`
/// with `n0 = ceil(log t / rho)` and `n = n0 + ell`.
pub fn walk_box_prob(
    ev: &PhiEvaluator,
    xi_star: Vec2,
    t: f64,
    ell: usize,
    eps: f64,
    cfg: &IsConfig,
) -> Result<WalkBoxEstimate, McError> {
    walk_box_prob_shifted(ev, xi_star, t, ell, eps, 0.0, cfg)
}

/// As [`walk_box_prob`] with the box moved by `shift` in both coordinates.
pub fn walk_box_prob_shifted(
    ev: &PhiEvaluator,
    xi_star: Vec2,
    t: f64,
    ell: usize,
    eps: f64,
    shift: f64,
    cfg: &IsConfig,
) -> Result<WalkBoxEstimate, McError> {
    if !(t > 1.0 && eps > 0.0) {
        return Err(McError::InvalidConfig("need t > 1 and eps > 0".into()));
    }
    let tilt = EsscherTilt::new(ev, xi_star, cfg.seed)?;
    let rho = common_drift(&tilt)?;
    let n0 = ((t.ln() / rho).ceil() as usize).max(1);
    if (ell as f64) > (n0 as f64).sqrt() {
        return Err(McError::InvalidConfig(format!(
            "ell = {ell} exceeds sqrt(n0) = {:.3}",
            (n0 as f64).sqrt()
        )));
    }
    let n = n0 + ell;
    let lo = [n0 as f64 * rho + shift, n0 as f64 * rho + eps.ln() + shift];
    let xi = xi_star;
    let inside = |s: Vec2| s[0] > lo[0] && s[0] < lo[0] + 1.0 && s[1] > lo[1] && s[1] < lo[1] + 1.0;

    let f = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.paths, PATH_CHUNK);
    let parts = map_chunks(sizes.len(), |c| -> Result<Accumulator, McError> {
        let mut rng = f.stream(Lane::WalkBox, c as u64);
        let mut draws = tilt.draws();
        let mut acc = Accumulator::default();
        for _ in 0..sizes[c] {
            let mut s = [0.0, 0.0];
            for _ in 0..n {
                let (u, _) = draws.next(&mut rng)?;
                s = [s[0] + u[0], s[1] + u[1]];
            }
            let w = if inside(s) {
                (-(xi[0] * s[0] + xi[1] * s[1]) + n as f64 * tilt.log_phi).exp()
            } else {
                0.0
            };
            acc.push(w);
        }
        Ok(acc)
    });
    let mut acc = Accumulator::default();
    for p in parts {
        acc.merge(&p?);
    }

    // W_{n,i} = (S_{n,i} - n rho_i) / (sigma_i sqrt n) has density h with
    // correlation r under the tilt.
    let nf = n as f64;
    let sig = [tilt.cov[0][0].sqrt(), tilt.cov[1][1].sqrt()];
    let r = tilt.cov[0][1] / (sig[0] * sig[1]);
    let det = 1.0 - r * r;
    let h = |w: Vec2| {
        (-(w[0] * w[0] - 2.0 * r * w[0] * w[1] + w[1] * w[1]) / (2.0 * det)).exp()
            / (2.0 * std::f64::consts::PI * det.sqrt())
    };
    let s_of = |w: Vec2| {
        [
            nf * tilt.drift[0] + sig[0] * nf.sqrt() * w[0],
            nf * tilt.drift[1] + sig[1] * nf.sqrt() * w[1],
        ]
    };
    let w_lo = [
        (lo[0] - nf * tilt.drift[0]) / (sig[0] * nf.sqrt()),
        (lo[1] - nf * tilt.drift[1]) / (sig[1] * nf.sqrt()),
    ];
    let w_hi = [
        w_lo[0] + 1.0 / (sig[0] * nf.sqrt()),
        w_lo[1] + 1.0 / (sig[1] * nf.sqrt()),
    ];
    let gl = GaussLegendre::new(32);
    let integral = gl.integrate(w_lo[0], w_hi[0], |w1| {
        gl.integrate(w_lo[1], w_hi[1], |w2| {
            let s = s_of([w1, w2]);
            h([w1, w2]) * (-(xi[0] * (s[0] - lo[0]) + xi[1] * (s[1] - lo[1]))).exp()
        })
    });
    let weight = (-(xi[0] * lo[0] + xi[1] * lo[1]) + nf * tilt.log_phi).exp();
    Ok(WalkBoxEstimate {
        n0,
        n,
        rho,
        mc: acc.estimate(),
        gauss: GaussLeading {
            weight,
            integral,
            value: weight * integral,
        },
    })
}
