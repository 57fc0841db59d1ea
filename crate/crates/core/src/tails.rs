//! Tail scans and hidden-regular-variation diagnostics over sample batches.
//!
//! Stationary draws come from chains and are serially dependent, so every
//! standard error here is a batch-means error over consecutive clusters of
//! [`CLUSTER`] samples.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::group::{label, mask_of_signs, SignGroup, SignMask};
use crate::linalg::Vec2;
use crate::mc::{joint_exceedance_prob, IsConfig, McError, SampleBatch};
use crate::mgf::PhiEvaluator;
use crate::stats::{batch_ratio, chi2_sf, moment_from_chunks, quantile, wald_equal_means, weighted_slope, Accumulator};
use crate::stats::{Estimate, MomentEstimate};

pub const CLUSTER: usize = 4096;
/// Angular bins per sign sector.
pub const SPECTRAL_BINS: usize = 64;
/// Angles with a block part below this are counted as near the axes.
pub const AXIS_MARGIN: f64 = 0.05;
const MIN_HITS: u64 = 10;
const MIN_EXCEEDANCES: u64 = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("invalid t grid: {0}")]
    InvalidGrid(String),
    #[error("the sample batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Parses `"start:stop:points"` or `"start:stop:points,log"`.
pub fn parse_t_grid(spec: &str) -> Result<Vec<f64>, TailError> {
    let bad = |m: &str| TailError::InvalidGrid(format!("'{spec}': {m}"));
    let (body, log) = match spec.split_once(',') {
        Some((b, "log")) => (b, true),
        Some((b, "lin")) => (b, false),
        Some(_) => return Err(bad("suffix must be 'log' or 'lin'")),
        None => (spec, false),
    };
    let parts: Vec<&str> = body.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:points"));
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad("start is not a number"))?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad("stop is not a number"))?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad("points is not an integer"))?;
    if points < 2 {
        return Err(bad("need at least two points"));
    }
    if !(start.is_finite() && stop.is_finite() && start < stop) {
        return Err(bad("grid must be increasing"));
    }
    if log && start <= 0.0 {
        return Err(bad("log grid needs start > 0"));
    }
    let k = (points - 1) as f64;
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            let f = i as f64 / k;
            if log {
                (start.ln() + f * (stop.ln() - start.ln())).exp()
            } else {
                start + f * (stop - start)
            }
        })
        .collect();
    check_grid(&grid)?;
    Ok(grid)
}

pub fn check_grid(grid: &[f64]) -> Result<(), TailError> {
    if grid.is_empty() {
        return Err(TailError::InvalidGrid("empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(TailError::InvalidGrid(
            "t values must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Crude,
    Importance,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Crude => "crude",
            Estimator::Importance => "importance",
        }
    }
}

/// `scaled = t^exponent (log t)^{1/2 if log_factor} raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    pub exponent: f64,
    pub log_factor: bool,
}

impl Scaling {
    pub fn apply(&self, t: f64, raw: f64) -> f64 {
        let mut f = t.powf(self.exponent);
        if self.log_factor {
            f *= t.ln().sqrt();
        }
        f * raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub t: f64,
    pub raw: f64,
    pub stderr: f64,
    pub scaled: f64,
    /// Samples (crude) or paths (importance) that reached the event.
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub scaling: Scaling,
    pub estimator: Estimator,
    /// Fewer than 10 hits at the largest `t` (crude mode).
    pub insufficient_tail: bool,
}

impl ScanResult {
    fn build(grid: &[f64], est: Vec<(Estimate, u64)>, scaling: Scaling, estimator: Estimator) -> Self {
        let rows: Vec<ScanRow> = grid
            .iter()
            .zip(est)
            .map(|(&t, (e, hits))| ScanRow {
                t,
                raw: e.value,
                stderr: e.stderr,
                scaled: scaling.apply(t, e.value),
                hits,
            })
            .collect();
        let insufficient_tail = estimator == Estimator::Crude && rows.last().is_some_and(|r| r.hits < MIN_HITS);
        Self {
            rows,
            scaling,
            estimator,
            insufficient_tail,
        }
    }

    /// Weighted least-squares slope of `log scaled` against `log t`.
    pub fn slope(&self) -> Estimate {
        let rows: Vec<&ScanRow> = self.rows.iter().filter(|r| r.raw > 0.0).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.scaled.ln()).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.stderr / r.raw).collect();
        weighted_slope(&x, &y, &s)
    }

    /// Columns `t, raw, stderr, scaled, estimator`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,raw,stderr,scaled,estimator")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.t,
                r.raw,
                r.stderr,
                r.scaled,
                self.estimator.name()
            )?;
        }
        Ok(())
    }
}

/// `P(value > t)` for every `t` of a sorted grid, with batch-means errors.
fn exceedance_scan(n: usize, value: impl Fn(usize) -> f64, grid: &[f64]) -> Vec<(Estimate, u64)> {
    let k = grid.len();
    let n_clusters = n.div_ceil(CLUSTER);
    let mut counts = vec![vec![0.0; k]; n_clusters];
    let mut sizes = vec![0.0; n_clusters];
    for (c, (cnt, size)) in counts.iter_mut().zip(sizes.iter_mut()).enumerate() {
        let mut hist = vec![0u64; k + 1];
        let range = c * CLUSTER..((c + 1) * CLUSTER).min(n);
        *size = range.len() as f64;
        for i in range {
            let v = value(i);
            hist[grid.partition_point(|t| *t < v)] += 1;
        }
        // number of values above t_j = values whose insertion point exceeds j
        let mut above = 0;
        for j in (0..k).rev() {
            above += hist[j + 1];
            cnt[j] = above as f64;
        }
    }
    (0..k)
        .map(|j| {
            let num: Vec<f64> = counts.iter().map(|c| c[j]).collect();
            let hits = num.iter().sum::<f64>() as u64;
            let e = if n_clusters >= 2 {
                batch_ratio(&num, &sizes)
            } else {
                let p = hits as f64 / n as f64;
                Estimate {
                    value: p,
                    stderr: (p * (1.0 - p) / n as f64).sqrt(),
                }
            };
            (e, hits)
        })
        .collect()
}

/// `P(|X_i| > t^{1/alpha_i})` with `scaled = t * raw`.
pub fn marginal_tail_scan(batch: &SampleBatch, component: usize, t_grid: &[f64]) -> Result<ScanResult, TailError> {
    check_grid(t_grid)?;
    if batch.is_empty() {
        return Err(TailError::EmptyBatch);
    }
    let a = batch.alphas()[component];
    let est = exceedance_scan(batch.len(), |i| batch.row(i)[component].abs().powf(a), t_grid);
    Ok(ScanResult::build(
        t_grid,
        est,
        Scaling {
            exponent: 1.0,
            log_factor: false,
        },
        Estimator::Crude,
    ))
}

/// Where joint probabilities come from.
pub enum JointSource<'a> {
    /// Counting `||X^(1)|| > t, ||X^(2)|| > t` in a batch.
    Crude(&'a SampleBatch),
    /// The tilted walk `P(exists n: e^{S_n1} > t, e^{S_n2} > t)` under `P_xi*`.
    Importance {
        ev: &'a PhiEvaluator,
        xi_star: Vec2,
        cfg: IsConfig,
    },
    /// Crude counting, switching to importance sampling when fewer than 10
    /// hits are seen at the largest `t`.
    Auto {
        batch: &'a SampleBatch,
        ev: &'a PhiEvaluator,
        xi_star: Vec2,
        cfg: IsConfig,
    },
}

/// Joint exceedances scaled by `t^{xi_1 + xi_2}`, times `(log t)^{1/2}` if requested.
pub fn joint_tail_scan(
    source: JointSource<'_>,
    xi: Vec2,
    t_grid: &[f64],
    use_log_factor: bool,
) -> Result<ScanResult, TailError> {
    check_grid(t_grid)?;
    let scaling = Scaling {
        exponent: xi[0] + xi[1],
        log_factor: use_log_factor,
    };
    let crude = |batch: &SampleBatch| -> Result<ScanResult, TailError> {
        if batch.is_empty() {
            return Err(TailError::EmptyBatch);
        }
        let norms = batch.block_norms();
        let est = exceedance_scan(batch.len(), |i| norms[i][0].min(norms[i][1]), t_grid);
        Ok(ScanResult::build(t_grid, est, scaling, Estimator::Crude))
    };
    let importance = |ev: &PhiEvaluator, xi_star: Vec2, cfg: &IsConfig| -> Result<ScanResult, TailError> {
        let est = t_grid
            .iter()
            .map(|&t| joint_exceedance_prob(ev, xi_star, t, 1.0, cfg).map(|e| (e.is, e.hits)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScanResult::build(t_grid, est, scaling, Estimator::Importance))
    };
    match source {
        JointSource::Crude(b) => crude(b),
        JointSource::Importance { ev, xi_star, cfg } => importance(ev, xi_star, &cfg),
        JointSource::Auto {
            batch,
            ev,
            xi_star,
            cfg,
        } => {
            let c = crude(batch)?;
            if c.insufficient_tail {
                importance(ev, xi_star, &cfg)
            } else {
                Ok(c)
            }
        }
    }
}

/// `s` quantile of a batch.
pub fn radius_quantile(batch: &SampleBatch, q: f64) -> f64 {
    let s: Vec<f64> = (0..batch.len()).map(|i| batch.radius(i)).collect();
    quantile(&s, q)
}

/// Outcome of a homogeneity test across cells that should share one law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub passed: bool,
}

impl InvarianceTest {
    fn new(statistic: f64, df: usize, level: f64) -> Self {
        let p_value = if df == 0 { 1.0 } else { chi2_sf(statistic, df as f64) };
        Self {
            statistic,
            df,
            p_value,
            passed: p_value > level,
        }
    }
}

/// Histogram of the angular part `omega` given `s > s0`.
///
/// Cells are indexed `sector * bins + bin`, where the sector is the sign
/// pattern of `omega` and the bin is the position of
/// `r = ||omega^(2)|| - ||omega^(1)||` in `[-(1 - margin), 1 - margin]`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralEstimate {
    pub s0: f64,
    pub exceedances: u64,
    pub bins: usize,
    pub dim: usize,
    pub counts: Vec<u64>,
    /// Normalized `counts` (sums to one unless empty).
    pub histogram: Vec<f64>,
    /// Exceedances per sign sector, margin included.
    pub sector_counts: Vec<u64>,
    /// Share of exceedances with a block part of `omega` below the margin.
    pub mass_near_axes: Estimate,
    pub insufficient_tail: bool,
    #[serde(skip)]
    clusters: Vec<Vec<f64>>,
}

pub fn spectral_measure(batch: &SampleBatch, s0: f64) -> Result<SpectralEstimate, TailError> {
    if batch.is_empty() {
        return Err(TailError::EmptyBatch);
    }
    let d = batch.dim();
    let sectors = 1usize << d;
    let cells = sectors * SPECTRAL_BINS;
    let n_clusters = batch.len().div_ceil(CLUSTER);
    let mut clusters = vec![vec![0.0; cells]; n_clusters];
    let mut near = vec![0.0; n_clusters];
    let mut exc = vec![0.0; n_clusters];
    let mut sector_counts = vec![0u64; sectors];
    let half_width = 1.0 - AXIS_MARGIN;
    for i in 0..batch.len() {
        let s = batch.radius(i);
        if !(s > s0) {
            continue;
        }
        let c = i / CLUSTER;
        exc[c] += 1.0;
        let norms = batch.block_norms()[i];
        let q = [norms[0] / s, norms[1] / s];
        let sector = mask_of_signs(batch.row(i)) as usize;
        sector_counts[sector] += 1;
        if q[0].min(q[1]) < AXIS_MARGIN {
            near[c] += 1.0;
            continue;
        }
        let r = q[1] - q[0];
        let bin = (((r + half_width) / (2.0 * half_width)) * SPECTRAL_BINS as f64).floor();
        let bin = (bin.max(0.0) as usize).min(SPECTRAL_BINS - 1);
        clusters[c][sector * SPECTRAL_BINS + bin] += 1.0;
    }
    let mut counts = vec![0u64; cells];
    for cl in &clusters {
        for (t, v) in counts.iter_mut().zip(cl) {
            *t += *v as u64;
        }
    }
    let binned: u64 = counts.iter().sum();
    let histogram = counts
        .iter()
        .map(|&c| if binned > 0 { c as f64 / binned as f64 } else { 0.0 })
        .collect();
    let exceedances = exc.iter().sum::<f64>() as u64;
    let mass_near_axes = if n_clusters >= 2 {
        batch_ratio(&near, &exc)
    } else {
        let p = near[0] / exc[0].max(1.0);
        Estimate {
            value: p,
            stderr: (p * (1.0 - p) / exc[0].max(1.0)).sqrt(),
        }
    };
    Ok(SpectralEstimate {
        s0,
        exceedances,
        bins: SPECTRAL_BINS,
        dim: d,
        counts,
        histogram,
        sector_counts,
        mass_near_axes,
        insufficient_tail: exceedances < MIN_EXCEEDANCES,
        clusters,
    })
}

impl SpectralEstimate {
    /// Tests that the cells of every group have equal expected counts. The
    /// per-group Wald statistics are summed; groups with fewer than 20
    /// exceedances in total are skipped. Passes when `p > 0.0027` (3 sigma).
    pub fn homogeneity(&self, groups: &[Vec<usize>]) -> InvarianceTest {
        let mut stat = 0.0;
        let mut df = 0;
        for g in groups {
            let total: u64 = g.iter().map(|&c| self.counts[c]).sum();
            if g.len() < 2 || total < 20 {
                continue;
            }
            let rows: Vec<Vec<f64>> = self
                .clusters
                .iter()
                .map(|cl| g.iter().map(|&c| cl[c]).collect())
                .collect();
            if let Some((w, k)) = wald_equal_means(&rows) {
                stat += w;
                df += k;
            }
        }
        InvarianceTest::new(stat, df, 0.0027)
    }

    /// Invariance of the histogram under the sign group `K`.
    pub fn k_invariance(&self, group: &SignGroup) -> InvarianceTest {
        let mut groups = Vec::new();
        for sector in 0..(1u32 << self.dim) {
            let orbit: Vec<SignMask> = group.elements().iter().map(|k| sector ^ k).collect();
            if orbit.iter().min() != Some(&sector) {
                continue;
            }
            for b in 0..self.bins {
                groups.push(orbit.iter().map(|&s| s as usize * self.bins + b).collect());
            }
        }
        self.homogeneity(&groups)
    }

    /// Symmetry under exchanging the two coordinates (two-dimensional batches).
    pub fn swap_symmetry(&self) -> InvarianceTest {
        assert_eq!(self.dim, 2, "coordinate swap needs d = 2");
        let mut groups = Vec::new();
        for sector in 0..4usize {
            let swapped = ((sector & 1) << 1) | (sector >> 1);
            for b in 0..self.bins {
                let a = sector * self.bins + b;
                let c = swapped * self.bins + (self.bins - 1 - b);
                if a < c {
                    groups.push(vec![a, c]);
                }
            }
        }
        self.homogeneity(&groups)
    }

    /// Columns `sector, bin, r_lo, r_hi, count, mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "sector,bin,r_lo,r_hi,count,mass")?;
        let width = 2.0 * (1.0 - AXIS_MARGIN) / self.bins as f64;
        for (cell, (&c, &m)) in self.counts.iter().zip(&self.histogram).enumerate() {
            let (sector, bin) = (cell / self.bins, cell % self.bins);
            let lo = -(1.0 - AXIS_MARGIN) + bin as f64 * width;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                label(sector as SignMask, self.dim),
                bin,
                lo,
                lo + width,
                c,
                m
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrantCell {
    pub k: String,
    pub count: u64,
    pub prob: f64,
    /// `prob` relative to the mean over cells.
    pub relative: f64,
}

/// Joint exceedances `{k x : ||x^(1)|| > tau, ||x^(2)|| > tau}` in the
/// positive orthant, one cell per `k` in the sign group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KInvarianceTable {
    pub tau: f64,
    pub cells: Vec<QuadrantCell>,
    pub pearson: InvarianceTest,
    /// Cluster-robust Wald test; this one decides `passed`.
    pub wald: InvarianceTest,
    pub passed: bool,
}

/// Homogeneity of the joint exceedances across the sign group, at level 0.01.
/// `tau` defaults to the 0.99 quantile of `min(||x^(1)||, ||x^(2)||)`.
pub fn k_invariance_check(
    batch: &SampleBatch,
    group: &SignGroup,
    tau: Option<f64>,
) -> Result<KInvarianceTable, TailError> {
    if batch.is_empty() {
        return Err(TailError::EmptyBatch);
    }
    let norms = batch.block_norms();
    let tau = match tau {
        Some(t) => t,
        None => quantile(&norms.iter().map(|n| n[0].min(n[1])).collect::<Vec<_>>(), 0.99),
    };
    let elems = group.elements();
    let m = elems.len();
    let n_clusters = batch.len().div_ceil(CLUSTER);
    let mut clusters = vec![vec![0.0; m]; n_clusters];
    for i in 0..batch.len() {
        if norms[i][0].min(norms[i][1]) > tau {
            if let Some(p) = group.position(mask_of_signs(batch.row(i))) {
                clusters[i / CLUSTER][p] += 1.0;
            }
        }
    }
    let totals: Vec<f64> = (0..m).map(|j| clusters.iter().map(|c| c[j]).sum()).collect();
    let mean = totals.iter().sum::<f64>() / m as f64;
    let n = batch.len() as f64;
    let cells = elems
        .iter()
        .zip(&totals)
        .map(|(&k, &c)| QuadrantCell {
            k: label(k, batch.dim()),
            count: c as u64,
            prob: c / n,
            relative: if mean > 0.0 { c / mean } else { 0.0 },
        })
        .collect();
    let pearson_stat = if mean > 0.0 {
        totals.iter().map(|c| (c - mean).powi(2) / mean).sum()
    } else {
        0.0
    };
    let pearson = InvarianceTest::new(pearson_stat, m - 1, 0.01);
    let wald = match wald_equal_means(&clusters) {
        Some((w, df)) => InvarianceTest::new(w, df, 0.01),
        None => InvarianceTest::new(0.0, 0, 0.01),
    };
    Ok(KInvarianceTable {
        tau,
        cells,
        pearson,
        wald,
        passed: wald.passed,
    })
}

impl KInvarianceTable {
    /// Columns `k, count, prob, relative`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,count,prob,relative")?;
        for c in &self.cells {
            writeln!(w, "{},{},{},{}", c.k, c.count, c.prob, c.relative)?;
        }
        Ok(())
    }
}

/// `E ||X^(1)||^{xi_1} ||X^(2)||^{xi_2}` (that is `E|X_1|^{theta_1}|X_2|^{theta_2}`
/// with `theta = xi * alpha` for two coordinates), with the stability verdict
/// of [`moment_from_chunks`] over 16 to 64 consecutive sub-batches.
pub fn mixed_moment(batch: &SampleBatch, xi: Vec2) -> MomentEstimate {
    let n = batch.len();
    let k = (n / CLUSTER).clamp(16, 64).min(n.max(1));
    let size = n / k.max(1);
    let norms = batch.block_norms();
    let chunks: Vec<Accumulator> = (0..k)
        .map(|c| {
            let end = if c + 1 == k { n } else { (c + 1) * size };
            let mut acc = Accumulator::default();
            for v in &norms[c * size..end] {
                acc.push(v[0].powf(xi[0]) * v[1].powf(xi[1]));
            }
            acc
        })
        .collect();
    let mut m = moment_from_chunks(&chunks);
    if n < 16 {
        m.stable = false;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{simulate_stationary, BatchMeta, SimulationConfig};
    use crate::mgf::TailIndices;
    use crate::models::{BLaw, Blocks, Family, ModelSpec};

    fn log_gaussian(eta: f64) -> ModelSpec {
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

    fn batch(spec: &ModelSpec, n: usize, seed: u64) -> SampleBatch {
        simulate_stationary(spec, &TailIndices::given([1.0, 1.0]), &SimulationConfig::new(n, seed)).unwrap()
    }

    fn rows(xs: Vec<f64>) -> SampleBatch {
        let meta = BatchMeta {
            source: "test".into(),
            fingerprint: String::new(),
            config: SimulationConfig::default(),
        };
        SampleBatch::from_rows(xs, vec![1.0, 1.0], Blocks::pair(), meta)
    }

    #[test]
    fn grid_parsing() {
        let g = parse_t_grid("10:1000:3,log").unwrap();
        assert!((g[1] - 100.0).abs() < 1e-9);
        assert_eq!(parse_t_grid("1:3:3").unwrap(), vec![1.0, 2.0, 3.0]);
        for bad in ["100:10:5", "1:2", "1:2:1", "0:10:3,log", "a:b:c", "1:2:3,foo"] {
            assert!(parse_t_grid(bad).is_err(), "{bad}");
        }
        assert!(check_grid(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_batch_steps_at_the_atom() {
        let b = rows([2.0, 4.0].repeat(100));
        let s = marginal_tail_scan(&b, 0, &[1.0, 1.9, 2.1, 3.0]).unwrap();
        let raw: Vec<f64> = s.rows.iter().map(|r| r.raw).collect();
        assert_eq!(raw, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(s.insufficient_tail);
        let m = mixed_moment(&b, [0.5, 1.0]);
        assert!((m.value - 2f64.sqrt() * 4.0).abs() < 1e-12);
        assert!(m.stable);
    }

    #[test]
    fn scans_are_monotone_nested_and_consistent() {
        let b = batch(&log_gaussian(0.5), 200_000, 1);
        let grid = parse_t_grid("0.5:50:8,log").unwrap();
        let m1 = marginal_tail_scan(&b, 0, &grid).unwrap();
        let m2 = marginal_tail_scan(&b, 1, &grid).unwrap();
        let j = joint_tail_scan(JointSource::Crude(&b), [0.3, 0.3], &grid, false).unwrap();
        for w in m1.rows.windows(2) {
            assert!(w[0].raw >= w[1].raw);
        }
        for ((a, c), r) in m1.rows.iter().zip(&m2.rows).zip(&j.rows) {
            assert!(r.raw <= a.raw && r.raw <= c.raw);
            assert_eq!(r.scaled, j.scaling.apply(r.t, r.raw));
            assert!((a.scaled - a.t * a.raw).abs() <= 1e-15 * a.scaled.abs());
        }
        assert!(m1.rows[0].raw >= 0.5);
    }

    #[test]
    fn independent_components_factorize() {
        let spec = ModelSpec::new(Family::LogGaussian {
            m: [-1.0, -1.0],
            c: [[0.5, 0.0], [0.0, 0.5]],
            b_law: BLaw::Gaussian {
                mean: [1.0, 1.0],
                cov: [[1.0, 0.0], [0.0, 1.0]],
            },
        })
        .unwrap();
        // independent A and B coordinates give independent X coordinates
        let b = batch(&spec, 300_000, 2);
        let grid = [1.0, 2.0, 4.0];
        let m1 = marginal_tail_scan(&b, 0, &grid).unwrap();
        let m2 = marginal_tail_scan(&b, 1, &grid).unwrap();
        let j = joint_tail_scan(JointSource::Crude(&b), [0.0, 0.0], &grid, false).unwrap();
        for ((a, c), r) in m1.rows.iter().zip(&m2.rows).zip(&j.rows) {
            let prod = a.raw * c.raw;
            let se = (c.raw * a.stderr).hypot(a.raw * c.stderr).hypot(r.stderr);
            assert!((r.raw - prod).abs() < 3.0 * se, "{} vs {prod}", r.raw);
        }
    }

    #[test]
    fn spectral_histogram_is_a_probability_vector() {
        let b = batch(&log_gaussian(0.5), 200_000, 3);
        let s0 = radius_quantile(&b, 0.9);
        let sp = spectral_measure(&b, s0).unwrap();
        assert!((sp.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(sp.counts.len(), 4 * SPECTRAL_BINS);
        assert!(!sp.insufficient_tail);
        assert!(sp.swap_symmetry().passed, "{:?}", sp.swap_symmetry());
    }

    #[test]
    fn k_table_relabeling_and_trivial_group() {
        let spec = ModelSpec::new(Family::BekkDiag {
            lags: vec![[0.6, 0.2], [0.3, 0.7]],
            cov: [[1.0, 0.0], [0.0, 1.0]],
        })
        .unwrap();
        let ti = crate::mgf::tail_indices(&spec, 1e-10).unwrap();
        let b = simulate_stationary(&spec, &ti, &SimulationConfig::new(300_000, 4)).unwrap();
        let k = SignGroup::full(2);
        let t = k_invariance_check(&b, &k, None).unwrap();
        assert_eq!(t.cells.len(), 4);
        let flipped = b.map_rows(|r| r[0] = -r[0]);
        let tf = k_invariance_check(&flipped, &k, Some(t.tau)).unwrap();
        assert!((t.pearson.statistic - tf.pearson.statistic).abs() < 1e-9);
        assert!((t.wald.statistic - tf.wald.statistic).abs() < 1e-6 * t.wald.statistic.max(1.0));
        let trivial = k_invariance_check(&b, &SignGroup::trivial(2), None).unwrap();
        assert_eq!(trivial.cells.len(), 1);
        assert!(trivial.passed);
    }
}
