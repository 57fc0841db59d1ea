//! Monte Carlo renewal measures of transient planar walks.
//!
//! For a walk `S_n` with drift `rho`, `U(C) = sum_n P(S_n in C)` is estimated
//! by counting visits along independent paths. The scaled quantity
//! `t^{1/2} U(t rho + A)` has a finite limit proportional to the area of `A`,
//! and on the product `R^2 x K` the visits split evenly over the sign group.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::group::{label, SignGroup, SignMask};
use crate::linalg::{cholesky, det, dot, is_positive_definite, norm, quad_form, Mat2, Vec2};
use crate::rng::{chunk_sizes, map_chunks, Lane, Stream, StreamFactory};
use crate::stats::{Accumulator, Estimate};

const PATH_CHUNK: usize = 4096;
const PILOT: usize = 10_000;
/// Visits stop once the walk is this many standard deviations past the region.
const SAFETY_SIGMAS: f64 = 10.0;
pub const STEP_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenewalError {
    #[error("walk drift is zero within 3 standard errors (estimated mean {mean:?})")]
    NonTransient { mean: Vec2 },
    #[error("observed signs generate {observed} of the {declared} elements of the declared group")]
    GroupMismatch { observed: usize, declared: usize },
    #[error("invalid renewal setup: {0}")]
    Invalid(String),
}

/// Increment law of a planar walk with a sign component.
pub trait IncrementLaw: Sync {
    /// One increment and the sign element it multiplies onto the path.
    fn sample(&self, rng: &mut Stream) -> (Vec2, SignMask);
    fn mean(&self) -> Vec2;
    fn cov(&self) -> Mat2;
    /// The group the sign component is meant to generate.
    fn group(&self) -> SignGroup;
}

/// Gaussian increments; coordinate `i` of the sign component flips with
/// probability `flip[i]` independently of the increment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianIncrements {
    pub mean: Vec2,
    pub cov: Mat2,
    pub flip: Vec2,
    #[serde(skip)]
    chol: Mat2,
}

impl GaussianIncrements {
    pub fn new(mean: Vec2, cov: Mat2, flip: Vec2) -> Result<Self, RenewalError> {
        if !is_positive_definite(&cov) {
            return Err(RenewalError::Invalid("covariance must be positive definite".into()));
        }
        if flip.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(RenewalError::Invalid("flip probabilities must lie in [0, 1]".into()));
        }
        Ok(Self {
            mean,
            cov,
            flip,
            chol: cholesky(&cov),
        })
    }
}

impl IncrementLaw for GaussianIncrements {
    fn sample(&self, rng: &mut Stream) -> (Vec2, SignMask) {
        let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let l = &self.chol;
        let x = [
            self.mean[0] + l[0][0] * z[0],
            self.mean[1] + l[1][0] * z[0] + l[1][1] * z[1],
        ];
        let mut k = 0;
        for (i, &p) in self.flip.iter().enumerate() {
            if p > 0.0 && rng.random::<f64>() < p {
                k |= 1 << i;
            }
        }
        (x, k)
    }

    fn mean(&self) -> Vec2 {
        self.mean
    }

    fn cov(&self) -> Mat2 {
        self.cov
    }

    fn group(&self) -> SignGroup {
        SignGroup::generated_by(2, (0..2).filter(|&i| self.flip[i] > 0.0).map(|i| 1 << i))
    }
}

/// Closed rectangle `[lo_1, hi_1] x [lo_2, hi_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Rect {
    pub fn new(lo: Vec2, hi: Vec2) -> Result<Self, RenewalError> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(RenewalError::Invalid("rectangle corners must satisfy lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn shifted(&self, by: Vec2) -> Self {
        Self {
            lo: [self.lo[0] + by[0], self.lo[1] + by[1]],
            hi: [self.hi[0] + by[0], self.hi[1] + by[1]],
        }
    }

    fn contains(&self, x: Vec2) -> bool {
        x[0] >= self.lo[0] && x[0] <= self.hi[0] && x[1] >= self.lo[1] && x[1] <= self.hi[1]
    }

    /// Largest projection of a corner on `dir`.
    fn far_projection(&self, dir: Vec2) -> f64 {
        let c = [
            if dir[0] >= 0.0 { self.hi[0] } else { self.lo[0] },
            if dir[1] >= 0.0 { self.hi[1] } else { self.lo[1] },
        ];
        dot(c, dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenewalConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// The region is centred at `along * t * rho`; `-1` places it against the drift.
    pub along: f64,
}

impl RenewalConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            along: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSlice {
    pub k: String,
    pub mask: SignMask,
    pub values: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalEstimate {
    pub region: Rect,
    pub t_grid: Vec<f64>,
    pub rho: Vec2,
    /// `t^{1/2} U(along t rho + region)` per `t`.
    pub values: Vec<Estimate>,
    /// The same split by the sign element at the visit (one slice for trivial `K`).
    pub group_slices: Vec<GroupSlice>,
    /// Raw visit totals per `t` and group element, for exact counting identities.
    pub visits: Vec<Vec<u64>>,
    pub capped_paths: u64,
    /// `(2 pi)^{-1/2} (det B)^{-1/2} |m|^{-1/2} area` with `B` the increment
    /// covariance. Reference only; the matrix in the limit theorem is not
    /// specified, so this number is not certified.
    pub stam_constant_uncertified: f64,
    /// `area / (|m| sqrt(2 pi sigma_perp^2))`, the Gaussian heuristic for the
    /// limit when `rho` is the increment mean.
    pub gaussian_heuristic: f64,
}

impl RenewalEstimate {
    /// `values[last] / values[0]`.
    pub fn stability_ratio(&self) -> f64 {
        self.values.last().map_or(f64::NAN, |v| v.value) / self.values[0].value
    }

    /// Columns `t, value, stderr, k` (`k = all` for the marginalized values).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value,stderr,k")?;
        for (t, v) in self.t_grid.iter().zip(&self.values) {
            writeln!(w, "{},{},{},all", t, v.value, v.stderr)?;
        }
        for s in &self.group_slices {
            for (t, v) in self.t_grid.iter().zip(&s.values) {
                writeln!(w, "{},{},{},{}", t, v.value, v.stderr, s.k)?;
            }
        }
        Ok(())
    }
}

/// Errors when the pilot mean is within 3 standard errors of zero in every coordinate.
pub fn check_transient(law: &dyn IncrementLaw, seed: u64) -> Result<Vec2, RenewalError> {
    let mut rng = StreamFactory::new(seed).stream(Lane::Pilot, 1 << 42);
    let mut acc = [Accumulator::default(), Accumulator::default()];
    for _ in 0..PILOT {
        let (x, _) = law.sample(&mut rng);
        acc[0].push(x[0]);
        acc[1].push(x[1]);
    }
    let mean = [acc[0].mean(), acc[1].mean()];
    let moving = acc
        .iter()
        .any(|a| a.mean().abs() > 3.0 * (a.variance() / a.count() as f64).sqrt());
    if moving {
        Ok(mean)
    } else {
        Err(RenewalError::NonTransient { mean })
    }
}

/// Visits of the walk started at the origin (identity sign) to
/// `along t rho + region`, one path serving every `t`.
pub fn renewal_measure_estimate(
    law: &dyn IncrementLaw,
    region: Rect,
    t_grid: &[f64],
    cfg: &RenewalConfig,
) -> Result<RenewalEstimate, RenewalError> {
    estimate(law, region, t_grid, cfg, None)
}

/// As [`renewal_measure_estimate`] with visits split by the sign element.
/// Fails when the sign component observed in a pilot generates a strict
/// subgroup of `declared`.
pub fn group_renewal_estimate(
    law: &dyn IncrementLaw,
    declared: &SignGroup,
    region: Rect,
    t_grid: &[f64],
    cfg: &RenewalConfig,
) -> Result<RenewalEstimate, RenewalError> {
    let mut rng = StreamFactory::new(cfg.seed).stream(Lane::Pilot, 1 << 43);
    let observed = SignGroup::generated_by(2, (0..1000).map(|_| law.sample(&mut rng).1));
    if !declared.is_subgroup_of(&observed) {
        return Err(RenewalError::GroupMismatch {
            observed: observed.len(),
            declared: declared.len(),
        });
    }
    estimate(law, region, t_grid, cfg, Some(declared))
}

fn estimate(
    law: &dyn IncrementLaw,
    region: Rect,
    t_grid: &[f64],
    cfg: &RenewalConfig,
    group: Option<&SignGroup>,
) -> Result<RenewalEstimate, RenewalError> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid[0] <= 0.0 {
        return Err(RenewalError::Invalid(
            "t grid must be positive and strictly increasing".into(),
        ));
    }
    if cfg.n_paths < 2 {
        return Err(RenewalError::Invalid("need at least two paths".into()));
    }
    check_transient(law, cfg.seed)?;
    let rho = law.mean();
    let sigma = quad_form(&law.cov(), rho).sqrt();
    let targets: Vec<Rect> = t_grid
        .iter()
        .map(|&t| region.shifted([cfg.along * t * rho[0], cfg.along * t * rho[1]]))
        .collect();
    let far = targets
        .iter()
        .map(|r| r.far_projection(rho))
        .fold(f64::NEG_INFINITY, f64::max);
    let trivial = SignGroup::trivial(2);
    let group = group.unwrap_or(&trivial);
    let m = group.len();
    let nt = t_grid.len();

    struct Chunk {
        total: Vec<Accumulator>,
        slices: Vec<Accumulator>,
        visits: Vec<u64>,
        capped: u64,
    }
    let factory = StreamFactory::new(cfg.seed);
    let sizes = chunk_sizes(cfg.n_paths, PATH_CHUNK);
    let chunks = map_chunks(sizes.len(), |c| {
        let mut rng = factory.stream(Lane::Renewal, c as u64);
        let mut out = Chunk {
            total: vec![Accumulator::default(); nt],
            slices: vec![Accumulator::default(); nt * m],
            visits: vec![0; nt * m],
            capped: 0,
        };
        let mut counts = vec![0u64; nt * m];
        for _ in 0..sizes[c] {
            counts.iter_mut().for_each(|v| *v = 0);
            let mut s = [0.0, 0.0];
            let mut k: SignMask = 0;
            let mut n = 0usize;
            loop {
                let (x, flip) = law.sample(&mut rng);
                n += 1;
                s = [s[0] + x[0], s[1] + x[1]];
                k ^= flip;
                let slot = group.position(k).unwrap_or(0);
                for (j, r) in targets.iter().enumerate() {
                    if r.contains(s) {
                        counts[j * m + slot] += 1;
                    }
                }
                if dot(s, rho) - far > SAFETY_SIGMAS * sigma * (n as f64).sqrt() {
                    break;
                }
                if n >= STEP_CAP {
                    out.capped += 1;
                    break;
                }
            }
            for j in 0..nt {
                let mut sum = 0;
                for g in 0..m {
                    let v = counts[j * m + g];
                    sum += v;
                    out.slices[j * m + g].push(v as f64);
                    out.visits[j * m + g] += v;
                }
                out.total[j].push(sum as f64);
            }
        }
        out
    });
    let mut total = vec![Accumulator::default(); nt];
    let mut slices = vec![Accumulator::default(); nt * m];
    let mut visits = vec![0u64; nt * m];
    let mut capped = 0;
    for ch in &chunks {
        total.iter_mut().zip(&ch.total).for_each(|(a, b)| a.merge(b));
        slices.iter_mut().zip(&ch.slices).for_each(|(a, b)| a.merge(b));
        visits.iter_mut().zip(&ch.visits).for_each(|(a, b)| *a += b);
        capped += ch.capped;
    }
    let scaled = |acc: &Accumulator, t: f64| {
        let e = acc.estimate();
        Estimate {
            value: t.sqrt() * e.value,
            stderr: t.sqrt() * e.stderr,
        }
    };
    let values = t_grid.iter().zip(&total).map(|(&t, a)| scaled(a, t)).collect();
    let group_slices = group
        .elements()
        .iter()
        .enumerate()
        .map(|(g, &mask)| GroupSlice {
            k: label(mask, 2),
            mask,
            values: t_grid
                .iter()
                .enumerate()
                .map(|(j, &t)| scaled(&slices[j * m + g], t))
                .collect(),
        })
        .collect();
    let cov = law.cov();
    let speed = norm(rho);
    let perp = [-rho[1] / speed, rho[0] / speed];
    let area = region.area();
    Ok(RenewalEstimate {
        region,
        t_grid: t_grid.to_vec(),
        rho,
        values,
        group_slices,
        visits: (0..nt).map(|j| visits[j * m..(j + 1) * m].to_vec()).collect(),
        capped_paths: capped,
        stam_constant_uncertified: (2.0 * std::f64::consts::PI).powf(-0.5)
            * det(&cov).powf(-0.5)
            * speed.powf(-0.5)
            * area,
        gaussian_heuristic: area / (speed * (2.0 * std::f64::consts::PI * quad_form(&cov, perp)).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlssonRow {
    pub t: f64,
    pub offset: f64,
    pub value: Estimate,
}

/// `t^{1/2} U(t rho + x + F_0)` over offsets `x = offset * e_perp`, with
/// `e_perp` the unit vector orthogonal to the drift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlssonTable {
    pub rows: Vec<CarlssonRow>,
    pub max: f64,
    /// Largest value at offset 0 over the grid.
    pub on_axis: f64,
    /// `max <= 3 on_axis`; reported, not a theorem constant.
    pub within_three_on_axis: bool,
}

pub fn carlsson_bound_check(
    law: &dyn IncrementLaw,
    region: Rect,
    offsets: &[f64],
    t_grid: &[f64],
    cfg: &RenewalConfig,
) -> Result<CarlssonTable, RenewalError> {
    let rho = law.mean();
    let speed = norm(rho);
    if speed == 0.0 {
        return Err(RenewalError::NonTransient { mean: rho });
    }
    let perp = [-rho[1] / speed, rho[0] / speed];
    let mut rows = Vec::new();
    let mut on_axis = 0.0f64;
    for &x in offsets {
        let est = renewal_measure_estimate(law, region.shifted([x * perp[0], x * perp[1]]), t_grid, cfg)?;
        for (&t, v) in t_grid.iter().zip(est.values) {
            if x == 0.0 {
                on_axis = on_axis.max(v.value);
            }
            rows.push(CarlssonRow { t, offset: x, value: v });
        }
    }
    let max = rows.iter().map(|r| r.value.value).fold(0.0, f64::max);
    Ok(CarlssonTable {
        rows,
        max,
        on_axis,
        within_three_on_axis: max <= 3.0 * on_axis,
    })
}
