//! Gaussian quadrature rules.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Hermite rule for expectations under the standard normal law:
/// `E[f(Z)] ~ sum w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Largest supported rule; beyond this the unweighted Hermite recurrence overflows.
pub const MAX_HERMITE_NODES: usize = 256;

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(
            (1..=MAX_HERMITE_NODES).contains(&n),
            "unsupported Gauss-Hermite order {n}"
        );
        // Eigenvalues of the Jacobi matrix give the nodes; Newton on the
        // orthonormal physicists' Hermite polynomials polishes them and
        // yields the weights.
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut guess = tridiagonal_eigenvalues(&(1..n).map(|k| (k as f64 / 2.0).sqrt()).collect::<Vec<_>>());
        guess.sort_by(|a, b| b.total_cmp(a));
        let mut x_phys = vec![0.0; n];
        let mut w_phys = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = guess[i];
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            if n % 2 == 1 && i == n / 2 {
                z = 0.0;
            }
            x_phys[i] = z;
            x_phys[n - 1 - i] = -z;
            w_phys[i] = 2.0 / (pp * pp);
            w_phys[n - 1 - i] = w_phys[i];
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = PI.sqrt();
        Self {
            nodes: x_phys.iter().map(|x| x * sqrt2).collect(),
            weights: w_phys.iter().map(|w| w / norm).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Shared rule of order `n`, built on first use.
pub fn hermite_rule(n: usize) -> &'static GaussHermite {
    static RULES: [OnceLock<GaussHermite>; MAX_HERMITE_NODES] = [const { OnceLock::new() }; MAX_HERMITE_NODES];
    RULES[n - 1].get_or_init(|| GaussHermite::new(n))
}

/// Eigenvalues of the symmetric tridiagonal matrix with zero diagonal and
/// off-diagonal `off` (implicit QL).
fn tridiagonal_eigenvalues(off: &[f64]) -> Vec<f64> {
    let n = off.len() + 1;
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = off.iter().copied().chain([0.0]).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[lo, hi]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [8, 64, 128, MAX_HERMITE_NODES] {
            let q = GaussHermite::new(n);
            assert!((q.expect(|_| 1.0) - 1.0).abs() < 1e-13, "n={n}");
            assert!(q.expect(|x| x).abs() < 1e-12);
            assert!((q.expect(|x| x * x) - 1.0).abs() < 1e-12);
            assert!((q.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
            assert!((q.expect(|x| x.powi(6)) - 15.0).abs() < 1e-10);
        }
    }

    #[test]
    fn hermite_exponential_moment() {
        // E[e^{tZ}] = e^{t^2/2}
        let q = GaussHermite::new(64);
        let v = q.expect(|x| (1.3 * x).exp());
        assert!((v - (0.5 * 1.3f64 * 1.3).exp()).abs() < 1e-12);
    }

    #[test]
    fn legendre_polynomials_exact() {
        let q = GaussLegendre::new(10);
        let v = q.integrate(0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-11);
        let v = q.integrate(-1.0, 1.0, |x| x.cos());
        assert!((v - 2.0 * 1f64.sin()).abs() < 1e-14);
    }
}
