//! Estimators and test statistics shared by the Monte Carlo modules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_diff(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        let d = (self.value - other.value).abs();
        if s > 0.0 {
            d / s
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Running mean/variance (Welford) for i.i.d. samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    max: f64,
    sum: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.sum += x;
        if x.abs() > self.max {
            self.max = x.abs();
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let nf = n as f64;
        self.mean += d * other.n as f64 / nf;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / nf;
        self.n = n;
        self.sum += other.sum;
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n > 1 {
            (self.variance() / self.n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            stderr: se,
        }
    }

    /// Largest absolute summand over the absolute sum; near zero for light tails.
    pub fn max_share(&self) -> f64 {
        if self.sum.abs() > 0.0 {
            self.max / self.sum.abs()
        } else {
            0.0
        }
    }
}

/// Ratio estimator `sum(numer) / sum(denom)` with a batch-means standard
/// error computed from independent chunk totals.
pub fn batch_ratio(numer: &[f64], denom: &[f64]) -> Estimate {
    assert_eq!(numer.len(), denom.len());
    let sn: f64 = numer.iter().sum();
    let sd: f64 = denom.iter().sum();
    if sd <= 0.0 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let r = sn / sd;
    let k = numer.len();
    if k < 2 {
        return Estimate {
            value: r,
            stderr: f64::NAN,
        };
    }
    let ss: f64 = numer.iter().zip(denom).map(|(n, d)| (n - r * d).powi(2)).sum();
    let var = ss * k as f64 / (k as f64 - 1.0) / (sd * sd);
    Estimate {
        value: r,
        stderr: var.sqrt(),
    }
}

/// Moment estimate with a heavy-tail stability verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub stable: bool,
    /// Largest summand over the total.
    pub max_share: f64,
    /// z-score between the first and second half of the chunks.
    pub halves_z: f64,
}

impl MomentEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.value,
            stderr: self.stderr,
        }
    }
}

/// Combines per-chunk accumulators (in sampling order) into a moment estimate.
///
/// The estimate is stable when the two halves of the chunks agree within 3
/// standard errors, no single summand carries 5% of the total, and the
/// running maximum of the quarter means does not grow at every quarter
/// with the last exceeding the first by more than half.
pub fn moment_from_chunks(chunks: &[Accumulator]) -> MomentEstimate {
    let mut all = Accumulator::default();
    chunks.iter().for_each(|c| all.merge(c));
    let k = chunks.len();
    let value = all.mean();
    let stderr = if k >= 4 {
        let means: Vec<f64> = chunks.iter().map(|c| c.mean()).collect();
        let counts: Vec<f64> = chunks.iter().map(|c| c.count() as f64).collect();
        let sums: Vec<f64> = means.iter().zip(&counts).map(|(m, n)| m * n).collect();
        batch_ratio(&sums, &counts).stderr
    } else {
        all.estimate().stderr
    };
    let half = |part: &[Accumulator]| {
        let mut a = Accumulator::default();
        part.iter().for_each(|c| a.merge(c));
        let sums: Vec<f64> = part.iter().map(|c| c.mean() * c.count() as f64).collect();
        let counts: Vec<f64> = part.iter().map(|c| c.count() as f64).collect();
        if part.len() >= 2 {
            batch_ratio(&sums, &counts)
        } else {
            a.estimate()
        }
    };
    let halves_z = if k >= 2 {
        half(&chunks[..k / 2]).z_diff(&half(&chunks[k / 2..]))
    } else {
        0.0
    };
    let quarter_growth = if k >= 4 {
        let q: Vec<f64> = (0..4)
            .map(|j| {
                let mut a = Accumulator::default();
                chunks[j * k / 4..(j + 1) * k / 4].iter().for_each(|c| a.merge(c));
                a.mean()
            })
            .collect();
        let mut running = f64::NEG_INFINITY;
        let mut grows = true;
        for &m in &q {
            if m <= running {
                grows = false;
            }
            running = running.max(m);
        }
        grows && q[3] > 1.5 * q[0]
    } else {
        false
    };
    let max_share = all.max_share();
    let stable = value.is_finite() && halves_z <= 3.0 && max_share < 0.05 && !quarter_growth;
    MomentEstimate {
        value,
        stderr,
        stable,
        max_share,
        halves_z,
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x: Vec<f64> = a.iter().copied().filter(|v| !v.is_nan()).collect();
    let mut y: Vec<f64> = b.iter().copied().filter(|v| !v.is_nan()).collect();
    if x.is_empty() || y.is_empty() {
        return f64::NAN;
    }
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// Weighted least-squares slope of `y` on `x` with per-point standard errors `sy`.
/// Points with non-finite values or zero error are skipped when others have errors.
pub fn weighted_slope(x: &[f64], y: &[f64], sy: &[f64]) -> Estimate {
    let pts: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .zip(sy)
        .filter(|((a, b), s)| a.is_finite() && b.is_finite() && s.is_finite())
        .map(|((&a, &b), &s)| (a, b, s))
        .collect();
    if pts.len() < 2 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let all_zero = pts.iter().all(|p| p.2 <= 0.0);
    let w = |s: f64| {
        if all_zero {
            1.0
        } else if s > 0.0 {
            1.0 / (s * s)
        } else {
            0.0
        }
    };
    let sw: f64 = pts.iter().map(|p| w(p.2)).sum();
    let xm = pts.iter().map(|p| w(p.2) * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| w(p.2) * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| w(p.2) * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| w(p.2) * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let stderr = if all_zero { 0.0 } else { (1.0 / sxx).sqrt() };
    Estimate { value: slope, stderr }
}

/// Cluster-robust Wald test that all cells share one mean.
///
/// `clusters[k][i]` is the count (or total) of cell `i` in independent
/// cluster `k`. Returns the statistic and its chi-square degrees of freedom
/// (`cells - 1`), or `None` when the contrast covariance is singular.
pub fn wald_equal_means(clusters: &[Vec<f64>]) -> Option<(f64, usize)> {
    let m = clusters.first()?.len();
    if m < 2 {
        return Some((0.0, 0));
    }
    let k = clusters.len();
    if k <= m {
        return None;
    }
    let p = m - 1;
    let diffs: Vec<Vec<f64>> = clusters.iter().map(|c| (1..m).map(|i| c[i] - c[0]).collect()).collect();
    let mean: Vec<f64> = (0..p)
        .map(|i| diffs.iter().map(|d| d[i]).sum::<f64>() / k as f64)
        .collect();
    let mut cov = vec![vec![0.0; p]; p];
    for d in &diffs {
        for i in 0..p {
            for j in 0..p {
                cov[i][j] += (d[i] - mean[i]) * (d[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= (k - 1) as f64);
    let x = solve_dense(cov, mean.clone())?;
    let w = k as f64 * mean.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    Some((w, p))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Upper tail probability of the chi-square law.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if !x.is_finite() {
        return 0.0;
    }
    ChiSquared::new(df).map(|d| 1.0 - d.cdf(x.max(0.0))).unwrap_or(f64::NAN)
}

/// Empirical quantile (linear interpolation) of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_merge_matches_sequential() {
        let data: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Accumulator::default();
        data.iter().for_each(|&x| all.push(x));
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        data[..40].iter().for_each(|&x| a.push(x));
        data[40..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
        assert_eq!(a.count(), 100);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[10.0, 11.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0], &[1.5, 2.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let s = weighted_slope(&x, &y, &[0.1; 4]);
        assert!((s.value + 0.5).abs() < 1e-12);
        assert!(s.stderr > 0.0);
    }

    #[test]
    fn wald_detects_unequal_cells() {
        let equal: Vec<Vec<f64>> = (0..200)
            .map(|k| vec![(k % 7) as f64, ((k * 3) % 7) as f64, ((k * 5) % 7) as f64])
            .collect();
        let (w, df) = wald_equal_means(&equal).unwrap();
        assert_eq!(df, 2);
        assert!(chi2_sf(w, 2.0) > 0.01, "{w}");
        let shifted: Vec<Vec<f64>> = equal.iter().map(|c| vec![c[0] + 2.0, c[1], c[2]]).collect();
        let (w, _) = wald_equal_means(&shifted).unwrap();
        assert!(chi2_sf(w, 2.0) < 1e-6);
        assert_eq!(wald_equal_means(&vec![vec![1.0]; 5]), Some((0.0, 0)));
    }

    #[test]
    fn batch_ratio_of_proportional_chunks() {
        let e = batch_ratio(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]);
        assert!((e.value - 0.1).abs() < 1e-15);
        assert!(e.stderr.abs() < 1e-15);
    }

    #[test]
    fn light_tailed_moment_is_stable() {
        let chunks: Vec<Accumulator> = (0..16)
            .map(|c| {
                let mut a = Accumulator::default();
                (0..1000).for_each(|i| a.push(1.0 + (((c * 1000 + i) * 7919) % 101) as f64 / 101.0));
                a
            })
            .collect();
        let m = moment_from_chunks(&chunks);
        assert!(m.stable, "{m:?}");
        assert!((m.value - 1.495).abs() < 0.01);
    }

    #[test]
    fn dominated_sum_is_unstable() {
        let mut chunks: Vec<Accumulator> = (0..16)
            .map(|_| {
                let mut a = Accumulator::default();
                (0..100).for_each(|_| a.push(1.0));
                a
            })
            .collect();
        chunks[15].push(1e6);
        assert!(!moment_from_chunks(&chunks).stable);
    }

    #[test]
    fn chi2_tail() {
        assert!((chi2_sf(0.0, 3.0) - 1.0).abs() < 1e-12);
        // 3-dof closed form: erfc(sqrt(x/2)) + sqrt(2x/pi) e^{-x/2}
        let x: f64 = 4.0;
        let exact =
            statrs::function::erf::erfc((x / 2.0).sqrt()) + (2.0 * x / std::f64::consts::PI).sqrt() * (-x / 2.0).exp();
        assert!((chi2_sf(x, 3.0) - exact).abs() < 1e-10);
    }
}
